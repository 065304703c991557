//! Error type shared by every module of the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SteerError>;

/// Enumeration of failures the solver pipeline can report.
///
/// Every variant names the violated invariant; `Display` messages start
/// with that name so diagnostics stay greppable in logs and CLI output.
#[derive(Clone, Debug, PartialEq)]
#[non_exhaustive]
pub enum SteerError {
    /// A matrix required to be symmetric departs from its transpose
    /// beyond tolerance.
    NotSymmetric { deviation: f64 },
    /// A matrix required to be symmetric positive definite has a
    /// non-positive spectrum or fails to factor.
    NotPositiveDefinite { min_eig: f64 },
    /// Operand shapes are inconsistent.
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    /// The controllability Gramian over the horizon is numerically
    /// singular; the terminal distribution cannot be steered.
    NotControllable { eig_ratio: f64 },
    /// An integration produced a non-finite or non-invertible value.
    IntegrationFailure { t: f64 },
    /// A matrix that must have full rank is rank deficient.
    RankDeficient { rank: usize, required: usize },
    /// The terminal constraint residual exceeds tolerance after solving.
    ConstraintInfeasible { residual: f64 },
    /// The backward feedback flow hit a singular resolvent factor.
    SingularFlow { t: f64 },
    /// Iterative minimization did not converge within its budget.
    NoConvergence { iterations: usize, grad_norm: f64 },
    /// Too few sample paths for the requested statistic.
    InsufficientPaths { required: usize, actual: usize },
    /// A configuration value was rejected before solving.
    InvalidConfig(String),
}

impl fmt::Display for SteerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SteerError::NotSymmetric { deviation } => {
                write!(f, "NotSymmetric: symmetry defect {deviation:e} exceeds tolerance")
            }
            SteerError::NotPositiveDefinite { min_eig } => {
                write!(f, "NotPositiveDefinite: smallest eigenvalue {min_eig:e}")
            }
            SteerError::DimensionMismatch { expected, found } => write!(
                f,
                "DimensionMismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            SteerError::NotControllable { eig_ratio } => write!(
                f,
                "NotControllable: Gramian eigenvalue ratio {eig_ratio:e} below tolerance"
            ),
            SteerError::IntegrationFailure { t } => {
                write!(f, "IntegrationFailure: non-finite value at t = {t}")
            }
            SteerError::RankDeficient { rank, required } => {
                write!(f, "RankDeficient: rank {rank}, required {required}")
            }
            SteerError::ConstraintInfeasible { residual } => write!(
                f,
                "ConstraintInfeasible: terminal constraint residual {residual:e} after solve"
            ),
            SteerError::SingularFlow { t } => {
                write!(f, "SingularFlow: singular resolvent in the feedback flow at t = {t}")
            }
            SteerError::NoConvergence { iterations, grad_norm } => write!(
                f,
                "NoConvergence: gradient norm {grad_norm:e} after {iterations} iterations"
            ),
            SteerError::InsufficientPaths { required, actual } => {
                write!(f, "InsufficientPaths: need at least {required}, got {actual}")
            }
            SteerError::InvalidConfig(msg) => write!(f, "InvalidConfig: {msg}"),
        }
    }
}

impl std::error::Error for SteerError {}
