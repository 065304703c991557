//! Model description and prior second moments.
//!
//! A model is the controlled linear diffusion
//!
//! ```text
//! dx = A(t)·x dt + B(t)·u dt + B(t)·dw,      x(0) ~ N(0, Σ₀)
//! ```
//!
//! together with an output map `y = C·x` and a terminal target: either a
//! full-state covariance for `x(T)` or an output covariance for `y(T)`.
//!
//! Steering lives entirely in second moments, so the only quantities ever
//! needed from the uncontrolled prior are the state transition matrices
//! `Φ(t, 0)` and `Φ(T, t)`, the controllability Gramians
//!
//! ```text
//! M[s,t] = ∫ₛᵗ Φ(t, τ)·B(τ)·B(τ)ᵀ·Φ(t, τ)ᵀ dτ,
//! ```
//!
//! and the joint covariance of `(x(0), x(T))` under zero control,
//!
//! ```text
//! S = [ Σ₀           Σ₀·Φ(T,0)ᵀ ]
//!     [ Φ(T,0)·Σ₀    Φ(T,0)·Σ₀·Φ(T,0)ᵀ + M[0,T] ].
//! ```
//!
//! Everything is integrated once on a uniform grid with the classical
//! fourth-order Runge-Kutta scheme at half the node spacing, which makes
//! the tabulated values fourth-order accurate and keeps midpoint values
//! available for downstream covariance propagation. Gramian increments at
//! this substep resolution amount to a Simpson-type quadrature.

use nalgebra::DMatrix;

use crate::error::{Result, SteerError};
use crate::symmat::{jacobi_eigen, symmetrize, SpdMatrix, SymMatrix};

/// Gramian eigenvalue ratio below which steering is refused.
pub const CTRL_TOL: f64 = 1e-10;

/// Gramian eigenvalue ratio below which a warning is logged.
pub const CTRL_WARN: f64 = 1e-7;

/// A matrix-valued function of time: either constant or sampled on a
/// uniform grid with linear interpolation between samples.
#[derive(Clone, Debug)]
pub enum MatrixFn {
    Constant(DMatrix<f64>),
    Sampled { times: Vec<f64>, values: Vec<DMatrix<f64>> },
}

impl MatrixFn {
    pub fn constant(mat: DMatrix<f64>) -> Self {
        MatrixFn::Constant(mat)
    }

    /// Uniformly sampled values; at least two samples, strictly
    /// increasing equispaced times, identical shapes.
    pub fn sampled(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(SteerError::InvalidConfig(format!(
                "sampled matrix needs at least two samples with matching times ({} times, {} values)",
                times.len(),
                values.len()
            )));
        }
        let dt = times[1] - times[0];
        let span = times[times.len() - 1] - times[0];
        if !(dt > 0.0) || !span.is_finite() {
            return Err(SteerError::InvalidConfig("sample times must be increasing".into()));
        }
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * span {
                return Err(SteerError::InvalidConfig("sample times must be uniformly spaced".into()));
            }
        }
        let shape = values[0].shape();
        for v in &values {
            if v.shape() != shape {
                return Err(SteerError::DimensionMismatch { expected: shape, found: v.shape() });
            }
        }
        Ok(MatrixFn::Sampled { times, values })
    }

    pub fn nrows(&self) -> usize {
        match self {
            MatrixFn::Constant(m) => m.nrows(),
            MatrixFn::Sampled { values, .. } => values[0].nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            MatrixFn::Constant(m) => m.ncols(),
            MatrixFn::Sampled { values, .. } => values[0].ncols(),
        }
    }

    /// Value at time `t`; clamped linear interpolation for samples.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixFn::Constant(m) => m.clone(),
            MatrixFn::Sampled { times, values } => {
                let dt = times[1] - times[0];
                let pos = (t - times[0]) / dt;
                let idx = (pos.floor() as isize).clamp(0, times.len() as isize - 2) as usize;
                let w = (pos - idx as f64).clamp(0.0, 1.0);
                &values[idx] * (1.0 - w) + &values[idx + 1] * w
            }
        }
    }

    fn span_covers(&self, horizon: f64) -> bool {
        match self {
            MatrixFn::Constant(_) => true,
            MatrixFn::Sampled { times, .. } => {
                let tol = 1e-9 * horizon.max(1.0);
                times[0] <= tol && times[times.len() - 1] >= horizon - tol
            }
        }
    }
}

/// Terminal steering target.
#[derive(Clone, Debug)]
pub enum Target {
    /// Prescribed covariance of the full state `x(T)`.
    FullState(SpdMatrix),
    /// Prescribed covariance of the output `y(T) = C·x(T)`.
    Output(SpdMatrix),
}

/// Validated problem description.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    a: MatrixFn,
    b: MatrixFn,
    c: DMatrix<f64>,
    horizon: f64,
    sigma0: SpdMatrix,
    target: Target,
}

impl ModelSpec {
    pub fn new(
        a: MatrixFn,
        b: MatrixFn,
        c: DMatrix<f64>,
        horizon: f64,
        sigma0: SpdMatrix,
        target: Target,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SteerError::DimensionMismatch { expected: (n, n), found: (a.nrows(), a.ncols()) });
        }
        if b.nrows() != n {
            return Err(SteerError::DimensionMismatch { expected: (n, b.ncols()), found: (b.nrows(), b.ncols()) });
        }
        let p = c.nrows();
        if c.ncols() != n || p == 0 || p > n {
            return Err(SteerError::DimensionMismatch { expected: (p.max(1), n), found: (c.nrows(), c.ncols()) });
        }
        if sigma0.dim() != n {
            return Err(SteerError::DimensionMismatch { expected: (n, n), found: (sigma0.dim(), sigma0.dim()) });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SteerError::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        if !a.span_covers(horizon) || !b.span_covers(horizon) {
            return Err(SteerError::InvalidConfig("matrix samples must cover [0, horizon]".into()));
        }
        let target_dim = match &target {
            Target::FullState(x) => (x.dim(), n),
            Target::Output(y) => (y.dim(), p),
        };
        if target_dim.0 != target_dim.1 {
            return Err(SteerError::DimensionMismatch {
                expected: (target_dim.1, target_dim.1),
                found: (target_dim.0, target_dim.0),
            });
        }
        // full row rank of C, checked on the singular spectrum
        let svd = c.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax).count();
        if rank < p {
            return Err(SteerError::RankDeficient { rank, required: p });
        }
        Ok(ModelSpec { a, b, c, horizon, sigma0, target })
    }

    /// Damped stochastic oscillator: position/momentum state with unit
    /// stiffness and damping, control and noise entering the momentum
    /// channel only. The target steers the momentum variance to 1/16 at
    /// `T = 1` from `Σ₀ = I/2`.
    pub fn ou_oscillator() -> ModelSpec {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let sigma0 = SpdMatrix::new(DMatrix::identity(2, 2) * 0.5).unwrap();
        let target = Target::Output(SpdMatrix::new(DMatrix::from_element(1, 1, 1.0 / 16.0)).unwrap());
        ModelSpec::new(MatrixFn::constant(a), MatrixFn::constant(b), c, 1.0, sigma0, target)
            .expect("built-in example is valid")
    }

    pub fn a(&self) -> &MatrixFn {
        &self.a
    }

    pub fn b(&self) -> &MatrixFn {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sigma0(&self) -> &SpdMatrix {
        &self.sigma0
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Control dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// Uniform time grid on `[0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// At least four steps so that the five-point residual stencils fit.
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SteerError::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 4 {
            return Err(SteerError::InvalidConfig(format!("grid needs at least 4 steps, got {steps}")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn spacing(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_nodes()).map(move |k| self.node(k))
    }
}

/// Precision blocks of the prior joint covariance: writing
/// `S⁻¹ = [[N, V], [Vᵀ, P]]`, block algebra on `S` gives
///
/// ```text
/// P = M[0,T]⁻¹,   V = -Φ(T,0)ᵀ·M[0,T]⁻¹,   N = Σ₀⁻¹ + Φ(T,0)ᵀ·M[0,T]⁻¹·Φ(T,0),
/// ```
///
/// which is both cheaper and better conditioned than inverting the full
/// `2n×2n` matrix.
#[derive(Clone, Debug)]
pub struct PrecisionBlocks {
    pub init: DMatrix<f64>,
    pub cross: DMatrix<f64>,
    pub term: DMatrix<f64>,
}

/// Transition matrices, Gramians and the prior joint covariance,
/// tabulated on a [`TimeGrid`].
#[derive(Clone, Debug)]
pub struct PriorMoments {
    grid: TimeGrid,
    /// `Φ(t_k, 0)` per node.
    pub phi_from_start: Vec<DMatrix<f64>>,
    /// `Φ(T, t_k)` per node.
    pub phi_to_end: Vec<DMatrix<f64>>,
    /// `M[0, t_k]` per node.
    pub gram_from_start: Vec<DMatrix<f64>>,
    /// `M[t_k, T]` per node.
    pub gram_to_end: Vec<DMatrix<f64>>,
    /// Midpoint values `Φ(T, t_k + h/2)`, used by covariance propagation.
    pub(crate) phi_to_end_mid: Vec<DMatrix<f64>>,
    /// Midpoint values `M[t_k + h/2, T]`.
    pub(crate) gram_to_end_mid: Vec<DMatrix<f64>>,
    joint: SymMatrix,
}

impl PriorMoments {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Transition over the whole horizon, `Φ(T, 0)`.
    pub fn phi_end(&self) -> &DMatrix<f64> {
        &self.phi_from_start[self.grid.steps()]
    }

    /// Controllability Gramian over the whole horizon, `M[0, T]`.
    pub fn gram_total(&self) -> &DMatrix<f64> {
        &self.gram_from_start[self.grid.steps()]
    }

    /// Joint covariance of `(x(0), x(T))` under zero control. Symmetric
    /// by construction; positive definite only for controllable pairs,
    /// hence not stored as SPD.
    pub fn joint(&self) -> &SymMatrix {
        &self.joint
    }

    /// Joint prior covariance as an SPD matrix.
    pub fn joint_spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::from_sym(self.joint.clone())
    }

    /// Smallest over largest eigenvalue of the horizon Gramian.
    pub fn controllability_ratio(&self) -> f64 {
        let (eigs, _) = jacobi_eigen(self.gram_total());
        let max = eigs[eigs.len() - 1];
        if max <= 0.0 {
            return 0.0;
        }
        eigs[0] / max
    }

    /// Blocks of the inverse of the prior joint covariance.
    ///
    /// # Errors
    ///
    /// `NotControllable` when the horizon Gramian is numerically
    /// singular, since every block rests on its inverse.
    pub fn precision_blocks(&self, sigma0: &SpdMatrix) -> Result<PrecisionBlocks> {
        let ratio = self.controllability_ratio();
        if ratio <= CTRL_TOL {
            return Err(SteerError::NotControllable { eig_ratio: ratio });
        }
        let gram = SpdMatrix::new(self.gram_total().clone())?;
        let phi = self.phi_end();
        let mut term = gram.inverse();
        symmetrize(&mut term);
        let cross = -phi.transpose() * &term;
        let mut init = sigma0.inverse() + phi.transpose() * &term * phi;
        symmetrize(&mut init);
        Ok(PrecisionBlocks { init, cross, term })
    }
}

/// Refuses to proceed when the horizon Gramian is numerically singular.
///
/// Logs a warning for ratios above the hard threshold but below
/// [`CTRL_WARN`]: steering still works, with amplified noise sensitivity.
pub fn assert_controllable(moments: &PriorMoments) -> Result<()> {
    let ratio = moments.controllability_ratio();
    if ratio <= CTRL_TOL {
        return Err(SteerError::NotControllable { eig_ratio: ratio });
    }
    if ratio < CTRL_WARN {
        log::warn!("controllability Gramian is nearly singular (eigenvalue ratio {ratio:e})");
    }
    Ok(())
}

/// One classical Runge-Kutta step for `Y' = f(t, Y)` with step `h`.
fn rk4_step<F>(f: &F, t: f64, y: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// One Runge-Kutta step for a coupled pair `(Y, Z)' = f(t, Y, Z)`.
fn rk4_step_pair<F>(f: &F, t: f64, y: &DMatrix<f64>, z: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>)
where
    F: Fn(f64, &DMatrix<f64>, &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>),
{
    let (ky1, kz1) = f(t, y, z);
    let (ky2, kz2) = f(t + 0.5 * h, &(y + &ky1 * (0.5 * h)), &(z + &kz1 * (0.5 * h)));
    let (ky3, kz3) = f(t + 0.5 * h, &(y + &ky2 * (0.5 * h)), &(z + &kz2 * (0.5 * h)));
    let (ky4, kz4) = f(t + h, &(y + &ky3 * h), &(z + &kz3 * h));
    (
        y + (ky1 + ky2 * 2.0 + ky3 * 2.0 + ky4) * (h / 6.0),
        z + (kz1 + kz2 * 2.0 + kz3 * 2.0 + kz4) * (h / 6.0),
    )
}

fn all_finite(mats: &[&DMatrix<f64>]) -> bool {
    mats.iter().all(|m| m.iter().all(|v| v.is_finite()))
}

/// Integrates transition matrices and Gramians over the grid and
/// assembles the prior joint covariance.
///
/// Forward sweep: `Φ' = A(t)·Φ` from the identity and the Lyapunov
/// equation `M' = A(t)·M + M·A(t)ᵀ + B(t)·B(t)ᵀ` from zero. Backward
/// sweep from `t = T`: `Ψ' = -Ψ·A(t)` for `Ψ(t) = Φ(T, t)` coupled with
/// the pure quadrature `M[t,T]' = -Ψ·B(t)·B(t)ᵀ·Ψᵀ`. Both run at half
/// the node spacing, so tabulated values are fourth-order accurate.
pub fn compute_prior_moments(spec: &ModelSpec, steps: usize) -> Result<PriorMoments> {
    let grid = TimeGrid::new(spec.horizon(), steps)?;
    let n = spec.n();
    let delta = 0.5 * grid.spacing();

    let a = |t: f64| spec.a().eval(t);
    let bbt = |t: f64| {
        let b = spec.b().eval(t);
        &b * b.transpose()
    };

    // forward sweep
    let phi_rhs = |t: f64, phi: &DMatrix<f64>| a(t) * phi;
    let gram_rhs = |t: f64, m: &DMatrix<f64>| {
        let at = a(t);
        &at * m + m * at.transpose() + bbt(t)
    };
    let mut phi_from_start = Vec::with_capacity(grid.num_nodes());
    let mut gram_from_start = Vec::with_capacity(grid.num_nodes());
    let mut phi = DMatrix::identity(n, n);
    let mut gram = DMatrix::zeros(n, n);
    phi_from_start.push(phi.clone());
    gram_from_start.push(gram.clone());
    for k in 0..grid.steps() {
        let t0 = grid.node(k);
        phi = rk4_step(&phi_rhs, t0, &phi, delta);
        phi = rk4_step(&phi_rhs, t0 + delta, &phi, delta);
        gram = rk4_step(&gram_rhs, t0, &gram, delta);
        gram = rk4_step(&gram_rhs, t0 + delta, &gram, delta);
        symmetrize(&mut gram);
        if !all_finite(&[&phi, &gram]) {
            return Err(SteerError::IntegrationFailure { t: grid.node(k + 1) });
        }
        phi_from_start.push(phi.clone());
        gram_from_start.push(gram.clone());
    }

    // backward sweep
    let back_rhs = |t: f64, psi: &DMatrix<f64>, _mb: &DMatrix<f64>| {
        let dpsi = -(psi * a(t));
        let pb = psi * spec.b().eval(t);
        let dmb = -(&pb * pb.transpose());
        (dpsi, dmb)
    };
    let mut phi_to_end = vec![DMatrix::zeros(0, 0); grid.num_nodes()];
    let mut gram_to_end = vec![DMatrix::zeros(0, 0); grid.num_nodes()];
    let mut phi_to_end_mid = vec![DMatrix::zeros(0, 0); grid.steps()];
    let mut gram_to_end_mid = vec![DMatrix::zeros(0, 0); grid.steps()];
    let mut psi = DMatrix::identity(n, n);
    let mut gram_b = DMatrix::zeros(n, n);
    phi_to_end[grid.steps()] = psi.clone();
    gram_to_end[grid.steps()] = gram_b.clone();
    for k in (0..grid.steps()).rev() {
        let t1 = grid.node(k + 1);
        let (p1, g1) = rk4_step_pair(&back_rhs, t1, &psi, &gram_b, -delta);
        psi = p1;
        gram_b = g1;
        symmetrize(&mut gram_b);
        phi_to_end_mid[k] = psi.clone();
        gram_to_end_mid[k] = gram_b.clone();
        let (p2, g2) = rk4_step_pair(&back_rhs, t1 - delta, &psi, &gram_b, -delta);
        psi = p2;
        gram_b = g2;
        symmetrize(&mut gram_b);
        if !all_finite(&[&psi, &gram_b]) {
            return Err(SteerError::IntegrationFailure { t: grid.node(k) });
        }
        phi_to_end[k] = psi.clone();
        gram_to_end[k] = gram_b.clone();
    }

    // prior joint covariance of (x(0), x(T))
    let phi_end = &phi_from_start[grid.steps()];
    let sigma0 = spec.sigma0().mat();
    let cross = sigma0 * phi_end.transpose();
    let mut term = phi_end * sigma0 * phi_end.transpose() + &gram_from_start[grid.steps()];
    symmetrize(&mut term);
    let mut joint = DMatrix::zeros(2 * n, 2 * n);
    joint.view_mut((0, 0), (n, n)).copy_from(sigma0);
    joint.view_mut((0, n), (n, n)).copy_from(&cross);
    joint.view_mut((n, 0), (n, n)).copy_from(&cross.transpose());
    joint.view_mut((n, n), (n, n)).copy_from(&term);

    Ok(PriorMoments {
        grid,
        phi_from_start,
        phi_to_end,
        gram_from_start,
        gram_to_end,
        phi_to_end_mid,
        gram_to_end_mid,
        joint: SymMatrix::from_symmetric(joint),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_spec(a: f64, target: f64) -> ModelSpec {
        ModelSpec::new(
            MatrixFn::constant(DMatrix::from_element(1, 1, a)),
            MatrixFn::constant(DMatrix::from_element(1, 1, 1.0)),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            SpdMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap(),
            Target::FullState(SpdMatrix::new(DMatrix::from_element(1, 1, target)).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn brownian_prior_joint() {
        // A = 0, B = 1, T = 1, Σ₀ = 1: Φ = 1, M = 1, S = [[1,1],[1,2]]
        let moments = compute_prior_moments(&scalar_spec(0.0, 1.0), 100).unwrap();
        assert_relative_eq!(moments.phi_end()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(moments.gram_total()[(0, 0)], 1.0, epsilon = 1e-12);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(moments.joint().mat(), &expected, epsilon = 1e-12);

        let blocks = moments.precision_blocks(&SpdMatrix::identity(1)).unwrap();
        assert_relative_eq!(blocks.init[(0, 0)], 2.0, epsilon = 1e-10);
        assert_relative_eq!(blocks.cross[(0, 0)], -1.0, epsilon = 1e-10);
        assert_relative_eq!(blocks.term[(0, 0)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn scalar_decay_matches_exponentials() {
        let moments = compute_prior_moments(&scalar_spec(-1.0, 1.0), 200).unwrap();
        assert_relative_eq!(moments.phi_end()[(0, 0)], (-1.0f64).exp(), epsilon = 1e-10);
        assert_relative_eq!(
            moments.gram_total()[(0, 0)],
            (1.0 - (-2.0f64).exp()) / 2.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn oscillator_transition_matches_matrix_exponential() {
        // reference values from an independent matrix-exponential computation
        let moments = compute_prior_moments(&ModelSpec::ou_oscillator(), 400).unwrap();
        let phi_ref = DMatrix::from_row_slice(
            2,
            2,
            &[
                0.6597001533917016,
                0.5335071951146929,
                -0.5335071951146930,
                0.1261929582770086,
            ],
        );
        assert_relative_eq!(moments.phi_end(), &phi_ref, epsilon = 1e-10);
        let gram_ref = DMatrix::from_row_slice(
            2,
            2,
            &[
                0.14008289018790665,
                0.14231496361957394,
                0.14231496361957394,
                0.34972270502107694,
            ],
        );
        assert_relative_eq!(moments.gram_total(), &gram_ref, epsilon = 1e-9);
    }

    #[test]
    fn transition_semigroup_and_gram_composition() {
        let spec = ModelSpec::ou_oscillator();
        let moments = compute_prior_moments(&spec, 100).unwrap();
        let grid = *moments.grid();
        let phi_end = moments.phi_end();
        for k in 0..=grid.steps() {
            let composed = &moments.phi_to_end[k] * &moments.phi_from_start[k];
            assert_relative_eq!(&composed, phi_end, epsilon = 1e-9);
            let gram_composed = &moments.phi_to_end[k]
                * &moments.gram_from_start[k]
                * moments.phi_to_end[k].transpose()
                + &moments.gram_to_end[k];
            assert_relative_eq!(&gram_composed, moments.gram_total(), epsilon = 1e-9);
        }
    }

    #[test]
    fn noise_only_input_is_not_controllable() {
        // B feeds only the first coordinate and A = 0 never mixes states.
        let spec = ModelSpec::new(
            MatrixFn::constant(DMatrix::zeros(2, 2)),
            MatrixFn::constant(DMatrix::from_row_slice(2, 1, &[1.0, 0.0])),
            DMatrix::identity(2, 2),
            1.0,
            SpdMatrix::identity(2),
            Target::FullState(SpdMatrix::identity(2)),
        )
        .unwrap();
        let moments = compute_prior_moments(&spec, 50).unwrap();
        assert!(matches!(
            assert_controllable(&moments),
            Err(SteerError::NotControllable { .. })
        ));
        assert!(matches!(
            moments.precision_blocks(spec.sigma0()),
            Err(SteerError::NotControllable { .. })
        ));
    }

    #[test]
    fn double_integrator_is_controllable() {
        let spec = ModelSpec::new(
            MatrixFn::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])),
            MatrixFn::constant(DMatrix::from_row_slice(2, 1, &[0.0, 1.0])),
            DMatrix::identity(2, 2),
            1.0,
            SpdMatrix::identity(2),
            Target::FullState(SpdMatrix::identity(2)),
        )
        .unwrap();
        let moments = compute_prior_moments(&spec, 50).unwrap();
        assert_controllable(&moments).unwrap();
    }

    #[test]
    fn sampled_matrix_interpolates() {
        let f = MatrixFn::sampled(
            vec![0.0, 0.5, 1.0],
            vec![
                DMatrix::from_element(1, 1, 0.0),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 4.0),
            ],
        )
        .unwrap();
        assert_relative_eq!(f.eval(0.25)[(0, 0)], 0.5);
        assert_relative_eq!(f.eval(0.5)[(0, 0)], 1.0);
        assert_relative_eq!(f.eval(0.75)[(0, 0)], 2.5);
        // clamped outside the sample range
        assert_relative_eq!(f.eval(-1.0)[(0, 0)], 0.0);
        assert_relative_eq!(f.eval(2.0)[(0, 0)], 4.0);
    }

    #[test]
    fn sampled_drift_integrates_exactly() {
        // a(t) = -1 + t/2 is piecewise linear, so Φ(1,0) = exp(∫a) = e^{-3/4}.
        let times: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        let values = times
            .iter()
            .map(|&t| DMatrix::from_element(1, 1, -1.0 + 0.5 * t))
            .collect();
        let spec = ModelSpec::new(
            MatrixFn::sampled(times, values).unwrap(),
            MatrixFn::constant(DMatrix::from_element(1, 1, 1.0)),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            SpdMatrix::identity(1),
            Target::FullState(SpdMatrix::identity(1)),
        )
        .unwrap();
        let moments = compute_prior_moments(&spec, 200).unwrap();
        assert_relative_eq!(moments.phi_end()[(0, 0)], (-0.75f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn sampled_rejects_nonuniform_times() {
        let err = MatrixFn::sampled(
            vec![0.0, 0.3, 1.0],
            vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
        );
        assert!(matches!(err, Err(SteerError::InvalidConfig(_))));
    }

    #[test]
    fn rejects_rank_deficient_output_map() {
        let err = ModelSpec::new(
            MatrixFn::constant(DMatrix::zeros(2, 2)),
            MatrixFn::constant(DMatrix::identity(2, 2)),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            1.0,
            SpdMatrix::identity(2),
            Target::Output(SpdMatrix::identity(2)),
        );
        assert!(matches!(err, Err(SteerError::RankDeficient { rank: 1, required: 2 })));
    }

    #[test]
    fn integration_overflow_is_reported() {
        let spec = scalar_spec(1e155, 1.0);
        let err = compute_prior_moments(&spec, 10);
        assert!(matches!(err, Err(SteerError::IntegrationFailure { .. })));
    }

    #[test]
    fn grid_rejects_tiny_step_counts() {
        assert!(matches!(TimeGrid::new(1.0, 3), Err(SteerError::InvalidConfig(_))));
        assert!(TimeGrid::new(1.0, 4).is_ok());
    }
}
