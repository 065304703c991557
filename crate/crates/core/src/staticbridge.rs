//! The static bridge: optimal joint law of initial and terminal state.
//!
//! Minimum-energy steering reduces to a finite-dimensional convex problem
//! over the joint covariance of `(x(0), x(T))`. Writing the joint as
//!
//! ```text
//! Σ = [ Σ₀   Y ]
//!     [ Yᵀ   X ],
//! ```
//!
//! with the prior joint `S` from [`PriorMoments`], the expected control
//! energy of the steering policy equals twice the Gaussian relative
//! entropy between `Σ` and `S`. Dropping terms that do not depend on the
//! free blocks leaves
//!
//! ```text
//! minimize   f(Σ) = -ln det Σ + tr(S⁻¹·Σ)
//! over       Y free,  X ≻ 0  with  C·X·Cᵀ = Σ_T,
//! ```
//!
//! a strictly convex program whose unique solution this module writes in
//! closed form.
//!
//! # Closed form
//!
//! Work in output-adapted coordinates `x̃ = T⁻¹x` where the columns of
//! `T` are a right inverse of `C` followed by an orthonormal basis of its
//! null space, so that `C·T = [I 0]`. Transform the prior quantities
//! (`Σ̃₀ = T⁻¹Σ₀T⁻ᵀ`, `Ṽ = TᵀVT`, `P̃ = TᵀPT` with `V, P` the precision
//! blocks of `S`) and let `K̃ = ṼᵀΣ̃₀Ṽ`. The slack variable
//!
//! ```text
//! Z̃ = Cov(x̃(T) | x̃(0)) = X̃ - ỸᵀΣ̃₀⁻¹Ỹ
//! ```
//!
//! satisfies, at the optimum, the coupled conditions
//! `Z̃⁻¹ = P̃ + C̃ᵀΛC̃` (with `C̃ = [I 0]` and `Λ` the constraint
//! multiplier) and `X̃ = Z̃ + Z̃K̃Z̃`. Eliminating the unconstrained
//! blocks reduces everything to one `p×p` quadratic matrix equation
//!
//! ```text
//! Z̃₁₁·Â·Z̃₁₁ + Z̃₁₁ = Σ_T,       Â = F·K̃·Fᵀ,   F = [I  -P̃₁₂P̃₂₂⁻¹],
//! ```
//!
//! solved by [`quadratic_solve`](crate::symmat::quadratic_solve); the
//! remaining blocks follow by substitution:
//!
//! ```text
//! Z̃₂₁ = -P̃₂₂⁻¹·P̃₂₁·Z̃₁₁,            Z̃₂₂ = P̃₂₂⁻¹ - Z̃₂₁·P̃₁₂·P̃₂₂⁻¹,
//! Ỹ   = -Σ̃₀·Ṽ·Z̃,                    X̃   = Z̃ + Z̃·K̃·Z̃,
//! Λ   = Z̃₁₁⁻¹·(I - Z̃₁₂·P̃₂₁) - P̃₁₁   (symmetric).
//! ```
//!
//! A full-state target is the special case `C = I`, where no coordinate
//! change is needed and the quadratic equation is `n×n`:
//! `Z·(VᵀΣ₀V)·Z + Z = Σ_T`, `Y = -Σ₀VZ`, `Λ = Z⁻¹ - P`.
//!
//! # Verification hooks
//!
//! [`stationarity_residuals`] re-derives the first-order conditions from
//! the solution alone — `(Σ⁻¹)₁₂ = V` and `(Σ⁻¹)₂₂ = P + CᵀΛC` — so a
//! bug in the closed form cannot hide behind its own algebra, and
//! [`oracle_minimize`] solves the same program by projected gradient
//! descent with no shared code path beyond matrix assembly.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Result, SteerError};
use crate::model::{assert_controllable, ModelSpec, PriorMoments, Target};
use crate::symmat::{jacobi_eigen, kl_gaussian, quadratic_solve, symmetrize, SpdMatrix, SymMatrix};

/// Normalized bound on the stationarity residuals of a valid solution.
pub const STATIONARITY_TOL: f64 = 1e-7;

/// Relative bound on the terminal constraint residual.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// Relative bound on the slack-equation residual.
pub const QUADRATIC_TOL: f64 = 1e-9;

/// Change of basis adapted to an output map `C`: the columns of `tmat`
/// are a right inverse of `C` followed by an orthonormal basis of its
/// null space, so `C·tmat = [I 0]`.
#[derive(Clone, Debug)]
pub struct OutputTransform {
    pub tmat: DMatrix<f64>,
    pub tmat_inv: DMatrix<f64>,
}

/// Builds the output-adapted change of basis for a full-row-rank `C`.
pub fn output_transform(c: &DMatrix<f64>) -> Result<OutputTransform> {
    let p = c.nrows();
    let n = c.ncols();
    if p == 0 || p > n {
        return Err(SteerError::DimensionMismatch { expected: (1.min(n), n), found: (p, n) });
    }
    let mut cct = c * c.transpose();
    symmetrize(&mut cct);
    let (cct_eigs, _) = jacobi_eigen(&cct);
    let emax = cct_eigs[p - 1];
    // eigenvalues of C·Cᵀ are squared singular values of C
    let rank = cct_eigs.iter().filter(|&&l| l > 1e-24 * emax).count();
    if rank < p {
        return Err(SteerError::RankDeficient { rank, required: p });
    }
    let cct_inv = Cholesky::new(cct)
        .ok_or(SteerError::RankDeficient { rank, required: p })?
        .inverse();
    let cplus = c.transpose() * cct_inv;
    // orthonormal null-space basis from the columns of the projector
    let proj = DMatrix::identity(n, n) - &cplus * c;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - p);
    for i in 0..n {
        if basis.len() == n - p {
            break;
        }
        let mut v = proj.column(i).clone_owned();
        for _ in 0..2 {
            for b in &basis {
                let coef = b.dot(&v);
                v -= b * coef;
            }
        }
        let norm = v.norm();
        if norm > 1e-10 {
            basis.push(v / norm);
        }
    }
    if basis.len() != n - p {
        return Err(SteerError::RankDeficient { rank: p + basis.len(), required: n });
    }
    let mut tmat = DMatrix::zeros(n, n);
    tmat.view_mut((0, 0), (n, p)).copy_from(&cplus);
    for (j, b) in basis.iter().enumerate() {
        tmat.set_column(p + j, b);
    }
    let tmat_inv = tmat
        .clone()
        .lu()
        .try_inverse()
        .expect("transform columns span complementary subspaces");
    Ok(OutputTransform { tmat, tmat_inv })
}

/// Optimal joint law of `(x(0), x(T))` together with the certificates
/// produced along the way.
#[derive(Clone, Debug)]
pub struct StaticSolution {
    /// Optimal `2n×2n` joint covariance of `(x(0), x(T))`.
    pub joint: SpdMatrix,
    /// Optimal terminal covariance `X = Cov(x(T))`.
    pub terminal_cov: SpdMatrix,
    /// Optimal cross covariance `Y = E[x(0)·x(T)ᵀ]`.
    pub cross_cov: DMatrix<f64>,
    /// Conditional terminal covariance `Cov(x(T) | x(0))`, expressed in
    /// output-adapted coordinates for output targets.
    pub slack: SpdMatrix,
    /// Multiplier of the terminal constraint: `p×p` for output targets,
    /// `n×n` for full-state targets.
    pub multiplier: SymMatrix,
    /// Coefficient `H` of the slack equation `Z·H·Z + Z = Σ_T`, which the
    /// leading `dim(H)` block of `slack` satisfies.
    pub quad_coeff: SpdMatrix,
    /// Value of `-ln det Σ + tr(S⁻¹Σ)` at the optimum.
    pub objective: f64,
    /// Expected control energy implied by the joint law (twice the
    /// relative entropy to the prior).
    pub predicted_energy: f64,
}

/// Objective of the static program, `-ln det Σ + tr(S⁻¹·Σ)`.
pub fn static_objective(joint: &SpdMatrix, prior: &SpdMatrix) -> Result<f64> {
    if joint.dim() != prior.dim() {
        return Err(SteerError::DimensionMismatch {
            expected: (prior.dim(), prior.dim()),
            found: (joint.dim(), joint.dim()),
        });
    }
    Ok(prior.solve(joint.mat()).trace() - joint.ln_det())
}

fn finish_solution(
    spec: &ModelSpec,
    moments: &PriorMoments,
    terminal: DMatrix<f64>,
    cross: DMatrix<f64>,
    slack: SpdMatrix,
    multiplier: SymMatrix,
    quad_coeff: SpdMatrix,
) -> Result<StaticSolution> {
    let n = spec.n();
    // hard feasibility check on the terminal constraint
    let (residual, scale) = match spec.target() {
        Target::Output(y) => ((spec.c() * &terminal * spec.c().transpose() - y.mat()).norm(), y.mat().norm()),
        Target::FullState(x) => ((&terminal - x.mat()).norm(), x.mat().norm()),
    };
    if residual > CONSTRAINT_TOL * scale {
        return Err(SteerError::ConstraintInfeasible { residual: residual / scale });
    }
    let mut joint = DMatrix::zeros(2 * n, 2 * n);
    joint.view_mut((0, 0), (n, n)).copy_from(spec.sigma0().mat());
    joint.view_mut((0, n), (n, n)).copy_from(&cross);
    joint.view_mut((n, 0), (n, n)).copy_from(&cross.transpose());
    joint.view_mut((n, n), (n, n)).copy_from(&terminal);
    let joint = SpdMatrix::from_sym(SymMatrix::from_symmetric(joint))?;
    let prior = moments.joint_spd()?;
    let objective = static_objective(&joint, &prior)?;
    let predicted_energy = (2.0 * kl_gaussian(&joint, &prior)?).max(0.0);
    Ok(StaticSolution {
        joint,
        terminal_cov: SpdMatrix::new(terminal)?,
        cross_cov: cross,
        slack,
        multiplier,
        quad_coeff,
        objective,
        predicted_energy,
    })
}

/// Closed-form solution for an output target `C·X·Cᵀ = Σ_T`.
pub fn solve_output_bridge(spec: &ModelSpec, moments: &PriorMoments) -> Result<StaticSolution> {
    let target = match spec.target() {
        Target::Output(y) => y,
        Target::FullState(_) => {
            return Err(SteerError::InvalidConfig(
                "output bridge requires an output target; use solve_state_bridge".into(),
            ))
        }
    };
    assert_controllable(moments)?;
    let n = spec.n();
    let p = spec.p();
    let blocks = moments.precision_blocks(spec.sigma0())?;
    let tr = output_transform(spec.c())?;

    // prior pieces in output-adapted coordinates
    let mut sigma0_t = &tr.tmat_inv * spec.sigma0().mat() * tr.tmat_inv.transpose();
    symmetrize(&mut sigma0_t);
    let sigma0_t = SpdMatrix::new(sigma0_t)?;
    let vt = tr.tmat.transpose() * &blocks.cross * &tr.tmat;
    let mut pt = tr.tmat.transpose() * &blocks.term * &tr.tmat;
    symmetrize(&mut pt);
    let mut kt = vt.transpose() * sigma0_t.mat() * &vt;
    symmetrize(&mut kt);

    // eliminate the unconstrained slack blocks
    let p11 = pt.view((0, 0), (p, p)).clone_owned();
    let (f, p12_p22inv, p21) = if p < n {
        let q = n - p;
        let p12 = pt.view((0, p), (p, q)).clone_owned();
        let p21 = pt.view((p, 0), (q, p)).clone_owned();
        let p22 = SpdMatrix::new(pt.view((p, p), (q, q)).clone_owned())?;
        let p12_p22inv = &p12 * p22.inverse();
        let mut f = DMatrix::zeros(p, n);
        f.view_mut((0, 0), (p, p)).copy_from(&DMatrix::identity(p, p));
        f.view_mut((0, p), (p, q)).copy_from(&(-&p12_p22inv));
        (f, p12_p22inv, p21)
    } else {
        (DMatrix::identity(p, p), DMatrix::zeros(p, 0), DMatrix::zeros(0, p))
    };
    let mut ahat = &f * &kt * f.transpose();
    symmetrize(&mut ahat);
    let ahat = SpdMatrix::new(ahat)?;

    // p×p quadratic equation, then the eliminated blocks by substitution
    let z11 = quadratic_solve(&ahat, target)?;
    let mut zt = DMatrix::zeros(n, n);
    zt.view_mut((0, 0), (p, p)).copy_from(z11.mat());
    if p < n {
        let q = n - p;
        let z21 = -p12_p22inv.transpose() * z11.mat();
        let p22_inv = {
            let p22 = SpdMatrix::new(pt.view((p, p), (q, q)).clone_owned())?;
            p22.inverse()
        };
        let mut z22 = &p22_inv - &z21 * &p12_p22inv;
        symmetrize(&mut z22);
        zt.view_mut((p, 0), (q, p)).copy_from(&z21);
        zt.view_mut((0, p), (p, q)).copy_from(&z21.transpose());
        zt.view_mut((p, p), (q, q)).copy_from(&z22);
    }
    let zt = SpdMatrix::from_sym(SymMatrix::from_symmetric(zt))?;

    // multiplier, then the joint blocks, then back to original coordinates
    let z12_p21 = zt.mat().view((0, p), (p, n - p)) * &p21;
    let mut multiplier = z11.inverse() * (DMatrix::identity(p, p) - z12_p21) - &p11;
    symmetrize(&mut multiplier);
    let yt = -(sigma0_t.mat() * &vt * zt.mat());
    let mut xt = zt.mat() + zt.mat() * &kt * zt.mat();
    symmetrize(&mut xt);
    let mut x = &tr.tmat * xt * tr.tmat.transpose();
    symmetrize(&mut x);
    let y = &tr.tmat * yt * tr.tmat.transpose();

    finish_solution(spec, moments, x, y, zt, SymMatrix::from_symmetric(multiplier), ahat)
}

/// Closed-form solution for a full-state target `X = Σ_T`.
pub fn solve_state_bridge(spec: &ModelSpec, moments: &PriorMoments) -> Result<StaticSolution> {
    let target = match spec.target() {
        Target::FullState(x) => x,
        Target::Output(_) => {
            return Err(SteerError::InvalidConfig(
                "state bridge requires a full-state target; use solve_output_bridge".into(),
            ))
        }
    };
    assert_controllable(moments)?;
    let blocks = moments.precision_blocks(spec.sigma0())?;
    let mut h = blocks.cross.transpose() * spec.sigma0().mat() * &blocks.cross;
    symmetrize(&mut h);
    let h = SpdMatrix::new(h)?;
    let z = quadratic_solve(&h, target)?;
    let y = -(spec.sigma0().mat() * &blocks.cross * z.mat());
    let mut multiplier = z.inverse() - &blocks.term;
    symmetrize(&mut multiplier);
    let x = target.mat().clone();
    finish_solution(spec, moments, x, y, z, SymMatrix::from_symmetric(multiplier), h)
}

/// Dispatches on the target kind of the model.
pub fn solve_static(spec: &ModelSpec, moments: &PriorMoments) -> Result<StaticSolution> {
    match spec.target() {
        Target::Output(_) => solve_output_bridge(spec, moments),
        Target::FullState(_) => solve_state_bridge(spec, moments),
    }
}

/// First-order optimality residuals of a static solution, re-derived
/// from the solution alone.
///
/// All fields are normalized; a valid solution keeps `stationarity_*`
/// below [`STATIONARITY_TOL`], `constraint` below [`CONSTRAINT_TOL`] and
/// `quadratic` below [`QUADRATIC_TOL`].
#[derive(Clone, Copy, Debug)]
pub struct StationarityReport {
    /// `‖P + CᵀΛC - (Σ⁻¹)₂₂‖ / (1 + ‖P‖)`: gradient condition in `X`.
    pub stationarity_x: f64,
    /// `‖V - (Σ⁻¹)₁₂‖ / (1 + ‖V‖)`: gradient condition in `Y`.
    pub stationarity_y: f64,
    /// Relative terminal-constraint violation.
    pub constraint: f64,
    /// Relative residual of the slack equation `Z·H·Z + Z = Σ_T`.
    pub quadratic: f64,
    /// Relative asymmetry of the multiplier.
    pub multiplier_asymmetry: f64,
}

impl StationarityReport {
    pub fn is_stationary(&self) -> bool {
        self.stationarity_x <= STATIONARITY_TOL
            && self.stationarity_y <= STATIONARITY_TOL
            && self.constraint <= CONSTRAINT_TOL
            && self.quadratic <= QUADRATIC_TOL
            && self.multiplier_asymmetry <= STATIONARITY_TOL
    }
}

pub fn stationarity_residuals(
    spec: &ModelSpec,
    moments: &PriorMoments,
    sol: &StaticSolution,
) -> Result<StationarityReport> {
    let n = spec.n();
    let blocks = moments.precision_blocks(spec.sigma0())?;
    let joint_inv = sol.joint.inverse();
    let g12 = joint_inv.view((0, n), (n, n)).clone_owned();
    let g22 = joint_inv.view((n, n), (n, n)).clone_owned();
    let ident = DMatrix::identity(n, n);
    let (c_eff, target): (&DMatrix<f64>, &SpdMatrix) = match spec.target() {
        Target::Output(y) => (spec.c(), y),
        Target::FullState(x) => (&ident, x),
    };
    let lam = sol.multiplier.mat();
    let rx = (&blocks.term + c_eff.transpose() * lam * c_eff - g22).norm() / (1.0 + blocks.term.norm());
    let ry = (&blocks.cross - g12).norm() / (1.0 + blocks.cross.norm());
    let cxc = c_eff * sol.terminal_cov.mat() * c_eff.transpose();
    let rc = (cxc - target.mat()).norm() / target.mat().norm();
    let k = sol.quad_coeff.dim();
    let z11 = sol.slack.mat().view((0, 0), (k, k)).clone_owned();
    let rq = (&z11 * sol.quad_coeff.mat() * &z11 + &z11 - target.mat()).norm() / target.mat().norm();
    let ra = (lam - lam.transpose()).norm() / (1.0 + lam.norm());
    Ok(StationarityReport {
        stationarity_x: rx,
        stationarity_y: ry,
        constraint: rc,
        quadratic: rq,
        multiplier_asymmetry: ra,
    })
}

/// Options for [`oracle_minimize`].
#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_iters: 100_000, grad_tol: 1e-9 }
    }
}

/// Result of the independent first-order solver.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub terminal_cov: SymMatrix,
    pub cross_cov: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Solves the static program by projected gradient descent with Armijo
/// backtracking. Deliberately shares no algebra with the closed form
/// beyond matrix assembly, so it serves as an independent check.
///
/// Descent stops at the gradient tolerance, or earlier when no Armijo
/// step achieves a decrease resolvable in floating point (the objective
/// sits within rounding error of its minimum by then; the gradient norm
/// must already be small for this exit to count as convergence).
pub fn oracle_minimize(
    spec: &ModelSpec,
    moments: &PriorMoments,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    assert_controllable(moments)?;
    let n = spec.n();
    let blocks = moments.precision_blocks(spec.sigma0())?;
    let mut sinv = DMatrix::zeros(2 * n, 2 * n);
    sinv.view_mut((0, 0), (n, n)).copy_from(&blocks.init);
    sinv.view_mut((0, n), (n, n)).copy_from(&blocks.cross);
    sinv.view_mut((n, 0), (n, n)).copy_from(&blocks.cross.transpose());
    sinv.view_mut((n, n), (n, n)).copy_from(&blocks.term);

    let ident = DMatrix::identity(n, n);
    let (c_eff, target): (&DMatrix<f64>, &DMatrix<f64>) = match spec.target() {
        Target::Output(y) => (spec.c(), y.mat()),
        Target::FullState(x) => (&ident, x.mat()),
    };
    let cct_inv = Cholesky::new(c_eff * c_eff.transpose())
        .ok_or(SteerError::RankDeficient { rank: 0, required: c_eff.nrows() })?
        .inverse();
    let cplus = c_eff.transpose() * cct_inv; // n×p right inverse
    let proj_null = &ident - &cplus * c_eff;

    let assemble = |y: &DMatrix<f64>, x: &DMatrix<f64>| {
        let mut sigma = DMatrix::zeros(2 * n, 2 * n);
        sigma.view_mut((0, 0), (n, n)).copy_from(spec.sigma0().mat());
        sigma.view_mut((0, n), (n, n)).copy_from(y);
        sigma.view_mut((n, 0), (n, n)).copy_from(&y.transpose());
        sigma.view_mut((n, n), (n, n)).copy_from(x);
        sigma
    };
    // objective, or None outside the positive-definite cone
    let objective_of = |sigma: &DMatrix<f64>| -> Option<f64> {
        let chol = Cholesky::new(sigma.clone())?;
        let ln_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let trace_term: f64 = sinv.iter().zip(sigma.iter()).map(|(a, b)| a * b).sum();
        Some(trace_term - ln_det)
    };
    // exact affine re-projection onto C·X·Cᵀ = Σ_T
    let reproject = |x: &mut DMatrix<f64>| {
        let defect = target - c_eff * x.clone() * c_eff.transpose();
        *x += &cplus * defect * cplus.transpose();
        symmetrize(x);
    };

    // feasible positive-definite start: target on the output subspace,
    // prior scale on its complement, zero cross block
    let scale = moments.joint().mat().view((n, n), (n, n)).trace() / n as f64;
    let mut x = &cplus * target * cplus.transpose() + &proj_null * scale * proj_null.transpose();
    symmetrize(&mut x);
    reproject(&mut x);
    let mut y = DMatrix::zeros(n, n);
    let mut f_cur = objective_of(&assemble(&y, &x))
        .ok_or(SteerError::NotPositiveDefinite { min_eig: f64::NAN })?;

    let mut grad_norm = f64::INFINITY;
    for iter in 0..opts.max_iters {
        let sigma = assemble(&y, &x);
        let chol = Cholesky::new(sigma).ok_or(SteerError::NotPositiveDefinite { min_eig: f64::NAN })?;
        let mut sigma_inv = chol.inverse();
        symmetrize(&mut sigma_inv);
        let g = &sinv - &sigma_inv;
        let gy = g.view((0, n), (n, n)).clone_owned() * 2.0;
        let gx_full = g.view((n, n), (n, n)).clone_owned();
        let mut gx = &gx_full - &cplus * (c_eff * &gx_full * c_eff.transpose()) * cplus.transpose();
        symmetrize(&mut gx);
        grad_norm = (gy.norm_squared() + gx.norm_squared()).sqrt();
        if grad_norm <= opts.grad_tol {
            return Ok(OracleSolution {
                terminal_cov: SymMatrix::from_symmetric(x),
                cross_cov: y,
                objective: f_cur,
                iterations: iter,
                grad_norm,
            });
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let y_new = &y - &gy * alpha;
            let mut x_new = &x - &gx * alpha;
            reproject(&mut x_new);
            if let Some(f_new) = objective_of(&assemble(&y_new, &x_new)) {
                let floor = (1e-4 * alpha * grad_norm * grad_norm).max(4.0 * f64::EPSILON * f_cur.abs());
                if f_cur - f_new >= floor {
                    y = y_new;
                    x = x_new;
                    f_cur = f_new;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // objective is flat to rounding error; only accept as
            // converged if the gradient is already small
            if grad_norm < 1e-3 {
                return Ok(OracleSolution {
                    terminal_cov: SymMatrix::from_symmetric(x),
                    cross_cov: y,
                    objective: f_cur,
                    iterations: iter,
                    grad_norm,
                });
            }
            return Err(SteerError::NoConvergence { iterations: iter, grad_norm });
        }
    }
    Err(SteerError::NoConvergence { iterations: opts.max_iters, grad_norm })
}
