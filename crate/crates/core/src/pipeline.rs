//! End-to-end orchestration: model in, feedback policy out.

use crate::dynbridge::{
    expected_energy, factorization_residual, pi_schedule, pq_boundary_residuals,
    propagate_closed_loop, riccati_residual, terminal_pi, BoundaryReport, CovSchedule,
    EnergyReport, GainSchedule,
};
use crate::error::Result;
use crate::model::{assert_controllable, compute_prior_moments, ModelSpec, PriorMoments};
use crate::staticbridge::{solve_static, stationarity_residuals, StaticSolution, StationarityReport};

/// Bound on the boundary, Lyapunov, Riccati and factorization residuals
/// of a valid solve on a reasonably fine grid.
pub const RESIDUAL_TOL: f64 = 1e-5;

/// Bound on the relative gap between realized and predicted energy.
pub const ENERGY_GAP_TOL: f64 = 1e-3;

/// Everything a solve produces, kept together so downstream consumers
/// (simulation, verification, serialization) agree on the grid.
#[derive(Clone, Debug)]
pub struct Solved {
    pub moments: PriorMoments,
    pub static_solution: StaticSolution,
    pub schedule: GainSchedule,
    pub covariances: CovSchedule,
    pub energy: EnergyReport,
}

/// Full solve: prior moments, static bridge, Riccati schedule, and the
/// closed-loop covariance flow, on a grid with `steps` intervals.
pub fn solve(spec: &ModelSpec, steps: usize) -> Result<Solved> {
    let moments = compute_prior_moments(spec, steps)?;
    assert_controllable(&moments)?;
    let static_solution = solve_static(spec, &moments)?;
    let pi_terminal = terminal_pi(spec, &static_solution);
    let schedule = pi_schedule(spec, &moments, &pi_terminal)?;
    let covariances = propagate_closed_loop(spec, &moments, &schedule)?;
    let energy = expected_energy(&schedule, &covariances, static_solution.predicted_energy);
    Ok(Solved { moments, static_solution, schedule, covariances, energy })
}

/// Every consistency check the library offers, evaluated on one solve.
#[derive(Clone, Copy, Debug)]
pub struct VerificationReport {
    pub stationarity: StationarityReport,
    pub boundary: BoundaryReport,
    pub riccati: f64,
    pub factorization: f64,
    pub energy: EnergyReport,
}

impl VerificationReport {
    /// All residuals within their documented tolerances.
    pub fn is_valid(&self) -> bool {
        self.stationarity.is_stationary()
            && self.boundary.initial <= RESIDUAL_TOL
            && self.boundary.terminal <= RESIDUAL_TOL
            && self.boundary.lyapunov <= RESIDUAL_TOL
            && self.riccati <= RESIDUAL_TOL
            && self.factorization <= RESIDUAL_TOL
            && self.energy.rel_gap <= ENERGY_GAP_TOL
    }
}

/// Re-derives optimality and consistency of a solve from its outputs.
pub fn verify_solution(spec: &ModelSpec, solved: &Solved) -> Result<VerificationReport> {
    let stationarity = stationarity_residuals(spec, &solved.moments, &solved.static_solution)?;
    let boundary =
        pq_boundary_residuals(spec, &solved.schedule, &solved.covariances, &solved.static_solution)?;
    let riccati = riccati_residual(spec, &solved.schedule);
    let factorization = factorization_residual(&solved.schedule, &solved.covariances)?;
    let energy = solved.energy;
    Ok(VerificationReport { stationarity, boundary, riccati, factorization, energy })
}
