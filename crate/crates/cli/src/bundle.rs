//! Serializable form of a complete solve: static optimum, schedules,
//! energy accounting, residual diagnostics, and provenance.
//!
//! Matrices serialize as `{rows, cols, data}` with `data` row-major, so
//! the JSON is self-describing and reloads without knowledge of the
//! model dimensions. All floats pass through serde_json's shortest
//! round-trip encoding; re-parsing reproduces every matrix bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use covsteer::{
    factorization_residual, pq_boundary_residuals, riccati_residual, stationarity_residuals,
    ModelSpec, Result, Solved, Target,
};

/// Row-major dense matrix exchange format.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(mat: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(mat.nrows() * mat.ncols());
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                data.push(mat[(i, j)]);
            }
        }
        MatrixData { rows: mat.nrows(), cols: mat.ncols(), data }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Identifies what produced a bundle and from which inputs.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub steps: usize,
    pub horizon: f64,
}

/// The static optimum over endpoint covariances.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct StaticPart {
    /// Optimal terminal state covariance `X`.
    pub terminal_cov: MatrixData,
    /// Optimal cross covariance `Y = E[x(0) x(T)']`.
    pub cross_cov: MatrixData,
    /// Conditional terminal covariance (slack) `Z`.
    pub slack: MatrixData,
    /// Lagrange multiplier of the terminal constraint.
    pub multiplier: MatrixData,
    /// Joint covariance of `(x(0), x(T))` at the optimum.
    pub joint: MatrixData,
    /// Covariance of the constrained output `C·x(T)` at the optimum.
    pub output_cov: MatrixData,
    pub objective: f64,
    pub predicted_energy: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct EnergyPart {
    /// Quadrature of expected instantaneous power along the schedule.
    pub realized: f64,
    /// Static prediction `2·KL(joint ‖ prior)`.
    pub predicted: f64,
    pub rel_gap: f64,
}

/// Residual diagnostics. The boundary and factorization entries need the
/// forward factor `(Σ₀⁻¹ − Π(0))⁻¹` to be positive definite; when it is
/// not, those diagnostics are undefined and serialize as `null`.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ResidualPart {
    pub stationarity_x: f64,
    pub stationarity_y: f64,
    pub constraint: f64,
    pub quadratic: f64,
    pub multiplier_asymmetry: f64,
    pub riccati: f64,
    pub boundary_initial: Option<f64>,
    pub boundary_terminal: Option<f64>,
    pub lyapunov: Option<f64>,
    pub factorization: Option<f64>,
    pub energy_rel_gap: f64,
}

/// Time grid plus per-node matrices of both schedules.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct SchedulePart {
    pub times: Vec<f64>,
    /// Feedback quadratic form `Π(t)` per node.
    pub pi: Vec<MatrixData>,
    /// Feedback gain `K(t) = −B(t)'Π(t)` per node.
    pub gain: Vec<MatrixData>,
    /// Closed-loop state covariance `Σ(t)` per node.
    pub sigma: Vec<MatrixData>,
    /// Forward factor `P(t)` per node.
    pub p_forward: Vec<MatrixData>,
}

/// Everything a solve produces, in exchange form.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct SolutionBundle {
    pub provenance: Provenance,
    #[serde(rename = "static")]
    pub static_part: StaticPart,
    pub energy: EnergyPart,
    pub residuals: ResidualPart,
    pub schedule: SchedulePart,
}

/// Assembles the exchange form of a solve. Residuals are recomputed
/// from the solution itself; diagnostics that require a positive
/// definite forward factor degrade to `null` instead of failing.
pub fn make_bundle(
    spec: &ModelSpec,
    solved: &Solved,
    config_hash: String,
    steps: usize,
) -> Result<SolutionBundle> {
    let stat = &solved.static_solution;
    let x = stat.terminal_cov.mat();
    let output_cov = match spec.target() {
        Target::Output(_) => spec.c() * x * spec.c().transpose(),
        Target::FullState(_) => x.clone(),
    };

    let stationarity = stationarity_residuals(spec, &solved.moments, stat)?;
    let boundary =
        pq_boundary_residuals(spec, &solved.schedule, &solved.covariances, stat).ok();
    let factorization = factorization_residual(&solved.schedule, &solved.covariances).ok();
    let residuals = ResidualPart {
        stationarity_x: stationarity.stationarity_x,
        stationarity_y: stationarity.stationarity_y,
        constraint: stationarity.constraint,
        quadratic: stationarity.quadratic,
        multiplier_asymmetry: stationarity.multiplier_asymmetry,
        riccati: riccati_residual(spec, &solved.schedule),
        boundary_initial: boundary.as_ref().map(|b| b.initial),
        boundary_terminal: boundary.as_ref().map(|b| b.terminal),
        lyapunov: boundary.as_ref().map(|b| b.lyapunov),
        factorization,
        energy_rel_gap: solved.energy.rel_gap,
    };

    let grid = solved.schedule.grid();
    Ok(SolutionBundle {
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            steps,
            horizon: grid.horizon(),
        },
        static_part: StaticPart {
            terminal_cov: MatrixData::from_matrix(x),
            cross_cov: MatrixData::from_matrix(&stat.cross_cov),
            slack: MatrixData::from_matrix(stat.slack.mat()),
            multiplier: MatrixData::from_matrix(stat.multiplier.mat()),
            joint: MatrixData::from_matrix(stat.joint.mat()),
            output_cov: MatrixData::from_matrix(&output_cov),
            objective: stat.objective,
            predicted_energy: stat.predicted_energy,
        },
        energy: EnergyPart {
            realized: solved.energy.realized,
            predicted: solved.energy.predicted,
            rel_gap: solved.energy.rel_gap,
        },
        residuals,
        schedule: SchedulePart {
            times: grid.nodes().collect(),
            pi: solved.schedule.pi.iter().map(MatrixData::from_matrix).collect(),
            gain: solved.schedule.gain.iter().map(MatrixData::from_matrix).collect(),
            sigma: solved.covariances.sigma.iter().map(MatrixData::from_matrix).collect(),
            p_forward: solved.covariances.p_forward.iter().map(MatrixData::from_matrix).collect(),
        },
    })
}
