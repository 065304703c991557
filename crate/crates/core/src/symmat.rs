//! Symmetric and symmetric positive definite matrix primitives.
//!
//! Everything downstream funnels through three operations defined here:
//!
//! * the principal matrix square root of an SPD matrix,
//! * the positive root of the quadratic matrix equation `Z + Z·H·Z = R`,
//! * the relative entropy between two centered Gaussians.
//!
//! The quadratic equation is solved in closed form. Conjugating by
//! `H^{1/2}` turns it into `W + W² = H^{1/2}·R·H^{1/2}`, which completes
//! the square to `(W + I/2)² = I/4 + H^{1/2}·R·H^{1/2}`, so
//!
//! ```text
//! Z = H^{-1/2}·[ (I/4 + H^{1/2}·R·H^{1/2})^{1/2} - I/2 ]·H^{-1/2}
//! ```
//!
//! is the unique positive definite solution. The other sign choice for the
//! inner square root is negative definite and never a covariance.
//!
//! Floating point keeps none of these properties for free, so the two
//! wrapper types re-symmetrize on construction and reject inputs whose
//! symmetry defect or spectrum is out of tolerance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SteerError};

/// Largest accepted relative symmetry defect `max|M - Mᵀ|`.
pub const SYM_TOL: f64 = 1e-9;

/// Smallest accepted eigenvalue of an SPD matrix, relative to the largest.
pub const SPD_TOL: f64 = 1e-10;

fn check_square(mat: &DMatrix<f64>) -> Result<()> {
    if mat.nrows() != mat.ncols() {
        return Err(SteerError::DimensionMismatch {
            expected: (mat.nrows(), mat.nrows()),
            found: (mat.nrows(), mat.ncols()),
        });
    }
    Ok(())
}

/// Symmetrize in place: `M ← (M + Mᵀ)/2`.
pub(crate) fn symmetrize(mat: &mut DMatrix<f64>) {
    let n = mat.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (mat[(i, j)] + mat[(j, i)]);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
}

/// Symmetric eigendecomposition by the cyclic Jacobi method, eigenvalues
/// ascending with matching eigenvector columns.
///
/// nalgebra's tridiagonalization-based solver stops with eigenpair
/// residuals around `1e-9 · ‖S‖` on clustered spectra, which is far too
/// coarse for the square-root kernels built on top of this. Jacobi
/// rotations drive the off-diagonal all the way to zero and keep the
/// accumulated basis orthogonal to machine precision, at a cost that is
/// irrelevant for the small dimensions handled here.
pub(crate) fn jacobi_eigen(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let mut a = mat.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for sweep in 1..=64usize {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].abs();
            }
        }
        if off == 0.0 || !off.is_finite() {
            break;
        }
        // damp early sweeps so the first rotations go after large entries
        let thresh = if sweep < 4 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let small = 100.0 * apq.abs();
                // once converged this far, entries that cannot perturb
                // either diagonal are flushed to exact zero
                if sweep > 4
                    && a[(p, p)].abs() + small == a[(p, p)].abs()
                    && a[(q, q)].abs() + small == a[(q, q)].abs()
                {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let diff = a[(q, q)] - a[(p, p)];
                let t = if diff.abs() + small == diff.abs() {
                    // rotation angle below rounding: use the small-angle limit
                    apq / diff
                } else {
                    let theta = 0.5 * diff / apq;
                    theta.signum() / (theta.abs() + theta.hypot(1.0))
                };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                let tau = s / (1.0 + c);
                let shift = t * apq;
                a[(p, p)] -= shift;
                a[(q, q)] += shift;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let g = a[(i, p)];
                        let h = a[(i, q)];
                        a[(i, p)] = g - s * (h + tau * g);
                        a[(i, q)] = h + s * (g - tau * h);
                        a[(p, i)] = a[(i, p)];
                        a[(q, i)] = a[(i, q)];
                    }
                }
                for i in 0..n {
                    let g = v[(i, p)];
                    let h = v[(i, q)];
                    v[(i, p)] = g - s * (h + tau * g);
                    v[(i, q)] = h + s * (g - tau * h);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(core::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    (values, vectors)
}

/// A square matrix kept exactly symmetric.
///
/// Construction rejects inputs whose symmetry defect exceeds
/// `SYM_TOL · (1 + max|entry|)` and stores `(M + Mᵀ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    mat: DMatrix<f64>,
}

impl SymMatrix {
    /// Validates symmetry and wraps the symmetrized matrix.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        check_square(&mat)?;
        let scale = 1.0 + mat.amax();
        let mut deviation = 0.0f64;
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                deviation = deviation.max((mat[(i, j)] - mat[(j, i)]).abs());
            }
        }
        if !deviation.is_finite() || deviation > SYM_TOL * scale {
            return Err(SteerError::NotSymmetric { deviation });
        }
        let mut mat = mat;
        symmetrize(&mut mat);
        Ok(SymMatrix { mat })
    }

    /// Wraps a matrix that is symmetric by construction, after
    /// re-symmetrizing to scrub rounding drift.
    pub(crate) fn from_symmetric(mut mat: DMatrix<f64>) -> Self {
        symmetrize(&mut mat);
        SymMatrix { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.mat
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (values, _) = jacobi_eigen(&self.mat);
        values.iter().copied().collect()
    }
}

/// A symmetric positive definite matrix.
///
/// Construction runs the `SymMatrix` checks, then requires the smallest
/// eigenvalue to exceed `-SPD_TOL` times the largest and the matrix to
/// admit a Cholesky factorization. All consumers may therefore factor or
/// invert without further checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates positive definiteness and wraps the symmetrized matrix.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let sym = SymMatrix::new(mat)?;
        Self::from_sym(sym)
    }

    /// Validates positive definiteness of an already symmetric matrix.
    pub fn from_sym(sym: SymMatrix) -> Result<Self> {
        let mat = sym.into_inner();
        let (values, _) = jacobi_eigen(&mat);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SteerError::NotPositiveDefinite { min_eig: f64::NAN });
        }
        let min_eig = values[0];
        let max_eig = values[values.len() - 1];
        if !(max_eig > 0.0 && min_eig > -SPD_TOL * max_eig) {
            return Err(SteerError::NotPositiveDefinite { min_eig });
        }
        if Cholesky::new(mat.clone()).is_none() {
            return Err(SteerError::NotPositiveDefinite { min_eig });
        }
        Ok(SpdMatrix { mat })
    }

    /// Identity of the given dimension.
    pub fn identity(n: usize) -> Self {
        SpdMatrix { mat: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix { mat: self.mat.clone() }
    }

    pub(crate) fn cholesky(&self) -> Cholesky<f64, Dyn> {
        Cholesky::new(self.mat.clone()).expect("factorization validated at construction")
    }

    /// Log-determinant, accumulated from the Cholesky factor so that
    /// determinants far outside f64 range stay representable.
    pub fn ln_det(&self) -> f64 {
        let l = self.cholesky();
        2.0 * l.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Inverse via the Cholesky factor.
    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.cholesky().inverse();
        symmetrize(&mut inv);
        inv
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.cholesky().solve(rhs)
    }
}

/// Eigendecomposition split into the pair `(H^{1/2}, H^{-1/2})`.
fn sqrt_pair(spd: &SpdMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let (values, u) = jacobi_eigen(spd.mat());
    let n = spd.dim();
    let mut half = DMatrix::zeros(n, n);
    let mut half_inv = DMatrix::zeros(n, n);
    for (i, &lambda) in values.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        half[(i, i)] = root;
        half_inv[(i, i)] = 1.0 / root;
    }
    let ut = u.transpose();
    (&u * half * &ut, &u * half_inv * ut)
}

/// Principal square root of an SPD matrix.
///
/// Computed by a Jacobi eigendecomposition: `S = U·diag(λ)·Uᵀ` gives
/// `S^{1/2} = U·diag(√λ)·Uᵀ`, accurate to rounding level even when the
/// spectrum is clustered. Eigenvalues inside the construction tolerance
/// band below zero are clamped to zero.
///
/// # Example
///
/// ```
/// use covsteer::symmat::{sym_sqrt, SpdMatrix};
/// use nalgebra::DMatrix;
///
/// let s = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
/// let r = sym_sqrt(&s);
/// let err = (r.mat() * r.mat() - s.mat()).norm();
/// assert!(err < 1e-12);
/// ```
pub fn sym_sqrt(s: &SpdMatrix) -> SpdMatrix {
    let (values, u) = jacobi_eigen(s.mat());
    let n = s.dim();
    let mut half = DMatrix::zeros(n, n);
    for (i, &lambda) in values.iter().enumerate() {
        half[(i, i)] = lambda.max(0.0).sqrt();
    }
    let mut root = &u * half * u.transpose();
    symmetrize(&mut root);
    SpdMatrix { mat: root }
}

/// Positive definite root of `Z + Z·H·Z = R` for SPD `H` and `R`.
pub fn quadratic_solve(h: &SpdMatrix, r: &SpdMatrix) -> Result<SpdMatrix> {
    if h.dim() != r.dim() {
        return Err(SteerError::DimensionMismatch {
            expected: (h.dim(), h.dim()),
            found: (r.dim(), r.dim()),
        });
    }
    let n = h.dim();
    let (h_half, h_half_inv) = sqrt_pair(h);
    let mut inner = DMatrix::identity(n, n) * 0.25 + &h_half * r.mat() * &h_half;
    symmetrize(&mut inner);
    // I/4 + H^{1/2} R H^{1/2} is PD whenever the inputs are.
    let inner_root = sym_sqrt(&SpdMatrix::from_sym(SymMatrix::from_symmetric(inner))?);
    let w = inner_root.mat() - DMatrix::<f64>::identity(n, n) * 0.5;
    let mut z = &h_half_inv * w * &h_half_inv;
    symmetrize(&mut z);
    SpdMatrix::from_sym(SymMatrix::from_symmetric(z))
}

/// Relative entropy `KL(N(0, Σ) ‖ N(0, S))` between centered Gaussians:
///
/// ```text
/// KL = (trace(S⁻¹Σ) - d + ln det S - ln det Σ) / 2
/// ```
///
/// Nonnegative, zero exactly when `Σ = S`; rounding may produce values a
/// hair below zero, never past `-1e-12`.
pub fn kl_gaussian(sigma: &SpdMatrix, s: &SpdMatrix) -> Result<f64> {
    if sigma.dim() != s.dim() {
        return Err(SteerError::DimensionMismatch {
            expected: (s.dim(), s.dim()),
            found: (sigma.dim(), sigma.dim()),
        });
    }
    let d = sigma.dim() as f64;
    let trace = s.solve(sigma.mat()).trace();
    Ok(0.5 * (trace - d + s.ln_det() - sigma.ln_det()))
}
