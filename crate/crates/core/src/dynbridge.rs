//! The dynamic bridge: state feedback realizing the static solution.
//!
//! Once the static bridge fixes the joint law of `(x(0), x(T))`, the
//! control realizing it is linear state feedback `u = K(t)·x` with
//! `K = -BᵀΠ`, where `Π` solves the homogeneous backward Riccati flow
//!
//! ```text
//! Π' = -AᵀΠ - ΠA + Π·BBᵀ·Π,        Π(T) = Π_T = CᵀΛC,
//! ```
//!
//! and `Λ` is the terminal-constraint multiplier of the static solution.
//! `Π_T` is the extra terminal precision the control must supply on top
//! of the prior: equivalently `Π_T = Z⁻¹ - M[0,T]⁻¹` with `Z` the
//! conditional terminal covariance, so its rank never exceeds the output
//! dimension.
//!
//! # Push-through form
//!
//! The Riccati flow is never integrated directly. Its solution is
//!
//! ```text
//! Π(t) = Φ(T,t)ᵀ·Π_T·(I + M[t,T]·Π_T)⁻¹·Φ(T,t),
//! ```
//!
//! evaluated from the transition matrices and Gramians already tabulated
//! in [`PriorMoments`]. This stays finite even when the constraint pins
//! the output exactly (where a naive sweep of the inverse flow blows up
//! at `T`), and the factor `I + M[t,T]·Π_T` is invertible for every `t`
//! on controllable models: at `t = 0` it equals `M[0,T]·Z⁻¹`, and
//! shrinking the Gramian toward `T` only moves its spectrum toward one.
//!
//! # Covariance factorization
//!
//! The closed-loop covariance `Σ(t)` satisfies the Lyapunov flow with
//! drift `A - BBᵀΠ`, and splits as
//!
//! ```text
//! Σ(t)⁻¹ = P(t)⁻¹ + Π(t),
//! ```
//!
//! where the forward factor `P` obeys the plain prior flow
//! `P' = AP + PAᵀ + BBᵀ` from `P(0) = (Σ₀⁻¹ - Π(0))⁻¹` — so `P(t)`
//! comes in closed form from the same tabulated transitions and
//! Gramians. The residual functions below check the Riccati and
//! Lyapunov equations with fourth-order five-point stencils (so grid
//! refinement visibly shrinks them), the factorization identity, and
//! the boundary match between static and dynamic layers; these are the
//! levers for validating a solve without trusting its own algebra.

use nalgebra::DMatrix;

use crate::error::{Result, SteerError};
use crate::model::{ModelSpec, PriorMoments, Target, TimeGrid};
use crate::staticbridge::StaticSolution;
use crate::symmat::{symmetrize, SpdMatrix, SymMatrix};

/// Feedback schedule on the grid: `Π(t_k)` and `K(t_k) = -B(t_k)ᵀΠ(t_k)`.
#[derive(Clone, Debug)]
pub struct GainSchedule {
    grid: TimeGrid,
    /// Riccati solution per node.
    pub pi: Vec<DMatrix<f64>>,
    /// Feedback gain per node.
    pub gain: Vec<DMatrix<f64>>,
    /// Midpoint Riccati values, for the covariance propagation stages.
    pub(crate) pi_mid: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Gain held constant from the grid node at or before `t`.
    pub fn gain_at(&self, t: f64) -> &DMatrix<f64> {
        let pos = (t / self.grid.spacing()).floor();
        let idx = (pos as isize).clamp(0, self.grid.steps() as isize) as usize;
        &self.gain[idx]
    }
}

/// Closed-loop covariance `Σ(t_k)` and forward factor `P(t_k)`.
#[derive(Clone, Debug)]
pub struct CovSchedule {
    grid: TimeGrid,
    pub sigma: Vec<DMatrix<f64>>,
    pub p_forward: Vec<DMatrix<f64>>,
}

impl CovSchedule {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
}

/// Terminal condition of the Riccati flow, `Π_T = CᵀΛC` (just `Λ` for
/// full-state targets).
pub fn terminal_pi(spec: &ModelSpec, sol: &StaticSolution) -> SymMatrix {
    match spec.target() {
        Target::Output(_) => {
            let mut pi = spec.c().transpose() * sol.multiplier.mat() * spec.c();
            symmetrize(&mut pi);
            SymMatrix::from_symmetric(pi)
        }
        Target::FullState(_) => sol.multiplier.clone(),
    }
}

/// Evaluates the Riccati solution and feedback gains on the grid of
/// `moments` through the push-through form.
pub fn pi_schedule(
    spec: &ModelSpec,
    moments: &PriorMoments,
    pi_terminal: &SymMatrix,
) -> Result<GainSchedule> {
    let n = spec.n();
    if pi_terminal.dim() != n {
        return Err(SteerError::DimensionMismatch {
            expected: (n, n),
            found: (pi_terminal.dim(), pi_terminal.dim()),
        });
    }
    let grid = *moments.grid();
    let pi_t = pi_terminal.mat();
    // a healthy flow keeps ‖Π(t)‖ within transition-growth multiples of
    // ‖Π_T‖; values wildly beyond that mean the factor grazed a pole
    let blowup = 1e12 * (1.0 + pi_t.norm());
    let eval = |psi: &DMatrix<f64>, gram: &DMatrix<f64>, t: f64| -> Result<DMatrix<f64>> {
        let w = DMatrix::identity(n, n) + gram * pi_t;
        // Π_T·W⁻¹ = (W⁻ᵀ·Π_T)ᵀ
        let winv_pit = w.transpose().lu().solve(pi_t).ok_or(SteerError::SingularFlow { t })?;
        let mut pi = psi.transpose() * winv_pit.transpose() * psi;
        if !pi.iter().all(|v| v.is_finite()) || pi.norm() > blowup {
            return Err(SteerError::SingularFlow { t });
        }
        symmetrize(&mut pi);
        Ok(pi)
    };

    let mut pi = Vec::with_capacity(grid.num_nodes());
    let mut gain = Vec::with_capacity(grid.num_nodes());
    for k in 0..grid.num_nodes() {
        let t = grid.node(k);
        let pik = eval(&moments.phi_to_end[k], &moments.gram_to_end[k], t)?;
        gain.push(-(spec.b().eval(t).transpose() * &pik));
        pi.push(pik);
    }
    let mut pi_mid = Vec::with_capacity(grid.steps());
    for k in 0..grid.steps() {
        let t = grid.node(k) + 0.5 * grid.spacing();
        pi_mid.push(eval(&moments.phi_to_end_mid[k], &moments.gram_to_end_mid[k], t)?);
    }
    Ok(GainSchedule { grid, pi, gain, pi_mid })
}

/// Propagates the closed-loop covariance `Σ' = A_cl·Σ + Σ·A_clᵀ + BBᵀ`
/// with `A_cl = A - BBᵀΠ` from `Σ(0) = Σ₀`, and tabulates the forward
/// factor `P(t) = Φ(t,0)·P(0)·Φ(t,0)ᵀ + M[0,t]`.
pub fn propagate_closed_loop(
    spec: &ModelSpec,
    moments: &PriorMoments,
    schedule: &GainSchedule,
) -> Result<CovSchedule> {
    let grid = *moments.grid();
    if schedule.grid != grid {
        return Err(SteerError::InvalidConfig("gain schedule was built on a different grid".into()));
    }
    let h = grid.spacing();

    // forward factor: (Σ₀⁻¹ - Π(0))⁻¹ pushed through the prior flow
    let q0 = spec.sigma0().inverse() - &schedule.pi[0];
    let mut p0 = q0.lu().try_inverse().ok_or(SteerError::SingularFlow { t: 0.0 })?;
    symmetrize(&mut p0);
    let mut p_forward = Vec::with_capacity(grid.num_nodes());
    for k in 0..grid.num_nodes() {
        let phi = &moments.phi_from_start[k];
        let mut p = phi * &p0 * phi.transpose() + &moments.gram_from_start[k];
        symmetrize(&mut p);
        p_forward.push(p);
    }

    let rhs = |t: f64, pi: &DMatrix<f64>, s: &DMatrix<f64>| {
        let b = spec.b().eval(t);
        let bbt = &b * b.transpose();
        let acl = spec.a().eval(t) - &bbt * pi;
        &acl * s + s * acl.transpose() + bbt
    };
    let mut sigma_list = Vec::with_capacity(grid.num_nodes());
    let mut sigma = spec.sigma0().mat().clone();
    sigma_list.push(sigma.clone());
    for k in 0..grid.steps() {
        let t0 = grid.node(k);
        let k1 = rhs(t0, &schedule.pi[k], &sigma);
        let k2 = rhs(t0 + 0.5 * h, &schedule.pi_mid[k], &(&sigma + &k1 * (0.5 * h)));
        let k3 = rhs(t0 + 0.5 * h, &schedule.pi_mid[k], &(&sigma + &k2 * (0.5 * h)));
        let k4 = rhs(t0 + h, &schedule.pi[k + 1], &(&sigma + &k3 * h));
        sigma += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        symmetrize(&mut sigma);
        if !sigma.iter().all(|v| v.is_finite()) {
            return Err(SteerError::IntegrationFailure { t: grid.node(k + 1) });
        }
        sigma_list.push(sigma.clone());
    }
    Ok(CovSchedule { grid, sigma: sigma_list, p_forward })
}

/// Boundary and interior consistency of the covariance factorization.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryReport {
    /// `‖Σ₀⁻¹ - P(0)⁻¹ - Π(0)‖ / ‖Σ₀⁻¹‖`.
    pub initial: f64,
    /// `‖X⁻¹ - P(T)⁻¹ - Π_T‖ / ‖X⁻¹‖` against the static terminal `X`.
    pub terminal: f64,
    /// Five-point residual of the closed-loop Lyapunov equation,
    /// maximized over interior nodes, normalized by `1 + ‖Σ‖`.
    pub lyapunov: f64,
}

/// Fourth-order central difference of a matrix table at node `k`.
fn five_point_derivative(values: &[DMatrix<f64>], k: usize, h: f64) -> DMatrix<f64> {
    (&values[k - 2] - &values[k - 1] * 8.0 + &values[k + 1] * 8.0 - &values[k + 2]) / (12.0 * h)
}

/// Checks that the static terminal covariance, the forward factor and
/// the Riccati solution assemble consistently at both ends of the
/// horizon, and that the propagated covariance solves its Lyapunov
/// equation in the interior.
pub fn pq_boundary_residuals(
    spec: &ModelSpec,
    schedule: &GainSchedule,
    cov: &CovSchedule,
    sol: &StaticSolution,
) -> Result<BoundaryReport> {
    let grid = schedule.grid;
    let last = grid.steps();
    let sigma0_inv = spec.sigma0().inverse();
    let p0_inv = SpdMatrix::new(cov.p_forward[0].clone())?.inverse();
    let initial = (&sigma0_inv - p0_inv - &schedule.pi[0]).norm() / sigma0_inv.norm();
    let x_inv = sol.terminal_cov.inverse();
    let pt_inv = SpdMatrix::new(cov.p_forward[last].clone())?.inverse();
    let terminal = (&x_inv - pt_inv - &schedule.pi[last]).norm() / x_inv.norm();

    let h = grid.spacing();
    let mut lyapunov: f64 = 0.0;
    for k in 2..=last - 2 {
        let t = grid.node(k);
        let b = spec.b().eval(t);
        let bbt = &b * b.transpose();
        let acl = spec.a().eval(t) - &bbt * &schedule.pi[k];
        let sigma = &cov.sigma[k];
        let res = five_point_derivative(&cov.sigma, k, h) - &acl * sigma - sigma * acl.transpose() - bbt;
        lyapunov = lyapunov.max(res.norm() / (1.0 + sigma.norm()));
    }
    Ok(BoundaryReport { initial, terminal, lyapunov })
}

/// Five-point residual of the backward Riccati equation
/// `Π' + AᵀΠ + ΠA - Π·BBᵀ·Π = 0`, maximized over interior nodes and
/// normalized by `1 + ‖Π‖²`.
pub fn riccati_residual(spec: &ModelSpec, schedule: &GainSchedule) -> f64 {
    let grid = schedule.grid;
    let h = grid.spacing();
    let mut worst: f64 = 0.0;
    for k in 2..=grid.steps() - 2 {
        let t = grid.node(k);
        let a = spec.a().eval(t);
        let b = spec.b().eval(t);
        let pi = &schedule.pi[k];
        let res = five_point_derivative(&schedule.pi, k, h) + a.transpose() * pi + pi * &a
            - pi * (&b * b.transpose()) * pi;
        worst = worst.max(res.norm() / (1.0 + pi.norm_squared()));
    }
    worst
}

/// Worst relative defect of `Σ⁻¹ = P⁻¹ + Π` over all grid nodes.
pub fn factorization_residual(schedule: &GainSchedule, cov: &CovSchedule) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..schedule.grid.num_nodes() {
        let sigma_inv = SpdMatrix::new(cov.sigma[k].clone())?.inverse();
        let p_inv = SpdMatrix::new(cov.p_forward[k].clone())?.inverse();
        let res = (&sigma_inv - p_inv - &schedule.pi[k]).norm() / sigma_inv.norm();
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Expected control energy of the feedback policy against the value the
/// static bridge predicts.
#[derive(Clone, Copy, Debug)]
pub struct EnergyReport {
    /// `∫ tr(K·Σ·Kᵀ) dt` along the propagated covariance.
    pub realized: f64,
    /// Twice the relative entropy of the static solution.
    pub predicted: f64,
    /// `|realized - predicted|` over `max(predicted, 1e-12)`.
    pub rel_gap: f64,
}

/// Integrates the expected control power over the horizon: composite
/// Simpson quadrature for an even number of steps, trapezoid otherwise.
pub fn expected_energy(schedule: &GainSchedule, cov: &CovSchedule, predicted: f64) -> EnergyReport {
    let grid = schedule.grid;
    let power: Vec<f64> = schedule
        .gain
        .iter()
        .zip(&cov.sigma)
        .map(|(k, s)| (k * s * k.transpose()).trace())
        .collect();
    let h = grid.spacing();
    let steps = grid.steps();
    let realized = if steps % 2 == 0 {
        let mut acc = power[0] + power[steps];
        for (k, &p) in power.iter().enumerate().take(steps).skip(1) {
            acc += if k % 2 == 1 { 4.0 * p } else { 2.0 * p };
        }
        acc * h / 3.0
    } else {
        let interior: f64 = power[1..steps].iter().sum();
        (0.5 * (power[0] + power[steps]) + interior) * h
    };
    let rel_gap = (realized - predicted).abs() / predicted.max(1e-12);
    EnergyReport { realized, predicted, rel_gap }
}
