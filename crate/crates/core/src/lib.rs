//! Minimum-energy covariance steering for linear stochastic systems.
//!
//! Given the controlled linear diffusion
//!
//! ```text
//! dx = A(t)·x dt + B(t)·u dt + B(t)·dw,      x(0) ~ N(0, Σ₀),
//! ```
//!
//! this crate computes, in closed form, the feedback law `u = K(t)·x`
//! minimizing the expected control energy `E ∫₀ᵀ ‖u‖² dt` subject to a
//! terminal covariance constraint — either on the full state,
//! `Cov(x(T)) = Σ_T`, or only on a lower-dimensional output `y = C·x`,
//! `Cov(y(T)) = Σ_T`. Partial constraints are the interesting case: the
//! solver decides how the unconstrained directions should end up, and
//! the answer is whatever lets the constrained ones be reached cheapest.
//!
//! The computation has two layers:
//!
//! * [`staticbridge`] reduces the problem to a convex program over the
//!   joint covariance of `(x(0), x(T))` and solves it in closed form via
//!   one symmetric quadratic matrix equation ([`symmat::quadratic_solve`]).
//! * [`dynbridge`] turns the optimal joint law into time-varying gains
//!   through a homogeneous Riccati flow, evaluated stably from the
//!   transition matrices and Gramians tabulated in [`model`].
//!
//! [`mc`] validates a policy by simulating the closed loop, and
//! [`pipeline`] wires the layers together:
//!
//! ```
//! use covsteer::{solve, verify_solution, ModelSpec};
//!
//! let spec = ModelSpec::ou_oscillator();
//! let solved = solve(&spec, 500).unwrap();
//! // steering the momentum variance down to 1/16 costs about 1.26
//! assert!((solved.energy.predicted - 1.2562813563926).abs() < 1e-6);
//! assert!(verify_solution(&spec, &solved).unwrap().is_valid());
//! ```
//!
//! Every solve is checkable after the fact: stationarity of the static
//! optimum, the Riccati and Lyapunov equations, the covariance
//! factorization, boundary consistency and the energy match are all
//! re-derived from the outputs by [`verify_solution`], independently of
//! the algebra that produced them.

pub mod dynbridge;
pub mod error;
pub mod mc;
pub mod model;
pub mod pipeline;
pub mod staticbridge;
pub mod symmat;

pub use dynbridge::{
    expected_energy, factorization_residual, pi_schedule, pq_boundary_residuals,
    propagate_closed_loop, riccati_residual, terminal_pi, BoundaryReport, CovSchedule,
    EnergyReport, GainSchedule,
};
pub use error::{Result, SteerError};
pub use mc::{empirical_moments, simulate_paths, tube_radii, SimConfig, TrajectoryBatch, Tube};
pub use model::{
    assert_controllable, compute_prior_moments, MatrixFn, ModelSpec, PrecisionBlocks, PriorMoments,
    Target, TimeGrid, CTRL_TOL, CTRL_WARN,
};
pub use pipeline::{solve, verify_solution, Solved, VerificationReport, ENERGY_GAP_TOL, RESIDUAL_TOL};
pub use staticbridge::{
    oracle_minimize, output_transform, solve_output_bridge, solve_state_bridge, solve_static,
    static_objective, stationarity_residuals, OracleOptions, OracleSolution, OutputTransform,
    StaticSolution, StationarityReport, CONSTRAINT_TOL, QUADRATIC_TOL, STATIONARITY_TOL,
};
pub use symmat::{kl_gaussian, quadratic_solve, sym_sqrt, SpdMatrix, SymMatrix, SPD_TOL, SYM_TOL};
