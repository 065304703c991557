//! File emission: plot-ready CSV schedules and machine-readable JSON.
//!
//! Every float in a CSV is printed as `{:.16e}` — 17 significant digits,
//! enough to reproduce the exact binary value on re-parse. Column orders
//! are fixed and documented in `docs/file_formats.md`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use covsteer::{
    empirical_moments, tube_radii, ModelSpec, Solved, SymMatrix, Target, TrajectoryBatch,
};

use crate::bundle::{MatrixData, SolutionBundle};
use crate::error::{CliError, Result};

/// Confidence level of the exported covariance ellipsoids.
pub const TUBE_LEVEL: f64 = 3.0;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn io_err(name: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("cannot write {name}: {e}"))
}

/// Writes `solution.json`.
pub fn write_solution_json(dir: &Path, bundle: &SolutionBundle) -> Result<()> {
    let mut out = create(dir, "solution.json")?;
    let text = serde_json::to_string_pretty(bundle)
        .map_err(|e| CliError::Config(format!("cannot serialize solution: {e}")))?;
    out.write_all(text.as_bytes()).map_err(io_err("solution.json"))?;
    out.write_all(b"\n").map_err(io_err("solution.json"))
}

/// Writes `gains.csv`: `t`, the entries of `Π(t)` row-major, then the
/// entries of `K(t)` row-major, one row per grid node.
pub fn write_gains_csv(dir: &Path, spec: &ModelSpec, solved: &Solved) -> Result<()> {
    let n = spec.n();
    let m = spec.m();
    let mut out = create(dir, "gains.csv")?;
    let mut header = String::from("t");
    for i in 0..n {
        for j in 0..n {
            header.push_str(&format!(",pi_{i}_{j}"));
        }
    }
    for i in 0..m {
        for j in 0..n {
            header.push_str(&format!(",k_{i}_{j}"));
        }
    }
    writeln!(out, "{header}").map_err(io_err("gains.csv"))?;
    let grid = solved.schedule.grid();
    for (k, t) in grid.nodes().enumerate() {
        let mut row = format!("{t:.16e}");
        let pi = &solved.schedule.pi[k];
        for i in 0..n {
            for j in 0..n {
                row.push_str(&format!(",{:.16e}", pi[(i, j)]));
            }
        }
        let gain = &solved.schedule.gain[k];
        for i in 0..m {
            for j in 0..n {
                row.push_str(&format!(",{:.16e}", gain[(i, j)]));
            }
        }
        writeln!(out, "{row}").map_err(io_err("gains.csv"))?;
    }
    Ok(())
}

/// Writes `covariance.csv`: `t`, the entries of `Σ(t)` row-major, then
/// the 3σ ellipsoid radii (largest first), one row per grid node.
pub fn write_covariance_csv(dir: &Path, spec: &ModelSpec, solved: &Solved) -> Result<()> {
    let n = spec.n();
    let mut out = create(dir, "covariance.csv")?;
    let mut header = String::from("t");
    for i in 0..n {
        for j in 0..n {
            header.push_str(&format!(",sigma_{i}_{j}"));
        }
    }
    for i in 0..n {
        header.push_str(&format!(",tube_r{i}"));
    }
    writeln!(out, "{header}").map_err(io_err("covariance.csv"))?;
    let grid = solved.covariances.grid();
    for (k, t) in grid.nodes().enumerate() {
        let sigma = &solved.covariances.sigma[k];
        let tube = tube_radii(&SymMatrix::new(sigma.clone())?, TUBE_LEVEL)?;
        let mut row = format!("{t:.16e}");
        for i in 0..n {
            for j in 0..n {
                row.push_str(&format!(",{:.16e}", sigma[(i, j)]));
            }
        }
        for i in 0..n {
            row.push_str(&format!(",{:.16e}", tube.radii[i]));
        }
        writeln!(out, "{row}").map_err(io_err("covariance.csv"))?;
    }
    Ok(())
}

/// Writes `trajectories.csv`: `path`, `t`, the state components, then the
/// control `u = K(t)·x`, one row per stored node per path.
pub fn write_trajectories_csv(
    dir: &Path,
    spec: &ModelSpec,
    solved: &Solved,
    batch: &TrajectoryBatch,
) -> Result<()> {
    let n = spec.n();
    let m = spec.m();
    let mut out = create(dir, "trajectories.csv")?;
    let mut header = String::from("path,t");
    for i in 0..n {
        header.push_str(&format!(",x_{i}"));
    }
    for i in 0..m {
        header.push_str(&format!(",u_{i}"));
    }
    writeln!(out, "{header}").map_err(io_err("trajectories.csv"))?;
    for path in 0..batch.n_paths() {
        for (node, &t) in batch.times().iter().enumerate() {
            let state = batch.state(path, node);
            let gain = solved.schedule.gain_at(t);
            let mut row = format!("{path},{t:.16e}");
            for &x in state {
                row.push_str(&format!(",{x:.16e}"));
            }
            for i in 0..m {
                let mut u = 0.0;
                for j in 0..n {
                    u += gain[(i, j)] * state[j];
                }
                row.push_str(&format!(",{u:.16e}"));
            }
            writeln!(out, "{row}").map_err(io_err("trajectories.csv"))?;
        }
    }
    Ok(())
}

/// One empirical statistic against its acceptance band.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct StatCheck {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    /// Acceptance half-width: three standard errors of the estimator.
    pub band: f64,
    pub pass: bool,
}

/// Ensemble summary written as `summary.json`.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct SimSummary {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub store_every: usize,
    pub empirical_terminal_cov: MatrixData,
    pub empirical_output_cov: MatrixData,
    pub empirical_mean_energy: f64,
    pub predicted_energy: f64,
    pub checks: Vec<StatCheck>,
    pub pass: bool,
}

fn cov_entry_checks(
    prefix: &str,
    observed: &nalgebra::DMatrix<f64>,
    expected: &nalgebra::DMatrix<f64>,
    n_paths: usize,
    checks: &mut Vec<StatCheck>,
) {
    // the sample covariance entry (i,j) of a Gaussian ensemble has
    // variance (σ_ii·σ_jj + σ_ij²)/(N−1)
    let denom = (n_paths - 1) as f64;
    for i in 0..expected.nrows() {
        for j in i..expected.ncols() {
            let var =
                (expected[(i, i)] * expected[(j, j)] + expected[(i, j)].powi(2)) / denom;
            let band = 3.0 * var.sqrt();
            let diff = (observed[(i, j)] - expected[(i, j)]).abs();
            checks.push(StatCheck {
                name: format!("{prefix}_{i}_{j}"),
                observed: observed[(i, j)],
                expected: expected[(i, j)],
                band,
                pass: diff <= band,
            });
        }
    }
}

/// Compares the ensemble against the solver's predictions: terminal
/// state covariance entry-wise, the constrained output covariance
/// entry-wise, the terminal mean, and the mean control energy, each
/// within three standard errors of its estimator.
pub fn build_summary(
    spec: &ModelSpec,
    solved: &Solved,
    batch: &TrajectoryBatch,
    seed: u64,
    store_every: usize,
) -> Result<SimSummary> {
    let terminal = batch.num_stored() - 1;
    let (mean, cov) = empirical_moments(batch, terminal)?;
    let cov = cov.into_inner();
    let n_paths = batch.n_paths();
    let x = solved.static_solution.terminal_cov.mat();

    let mut checks = Vec::new();
    cov_entry_checks("state_cov", &cov, x, n_paths, &mut checks);

    let output_cov = spec.c() * &cov * spec.c().transpose();
    if let Target::Output(target) = spec.target() {
        cov_entry_checks("output_cov", &output_cov, target.mat(), n_paths, &mut checks);
    }

    // the terminal mean of a zero-mean ensemble estimates 0 with
    // standard error √(σ_ii/N)
    for i in 0..spec.n() {
        let band = 3.0 * (x[(i, i)] / n_paths as f64).sqrt();
        checks.push(StatCheck {
            name: format!("state_mean_{i}"),
            observed: mean[i],
            expected: 0.0,
            band,
            pass: mean[i].abs() <= band,
        });
    }

    let mean_energy = batch.mean_energy();
    let energy_var = batch
        .energies()
        .iter()
        .map(|e| (e - mean_energy).powi(2))
        .sum::<f64>()
        / (n_paths - 1) as f64;
    let band = 3.0 * (energy_var / n_paths as f64).sqrt();
    let predicted = solved.energy.realized;
    checks.push(StatCheck {
        name: "mean_energy".to_string(),
        observed: mean_energy,
        expected: predicted,
        band,
        pass: (mean_energy - predicted).abs() <= band,
    });

    let pass = checks.iter().all(|c| c.pass);
    Ok(SimSummary {
        n_paths,
        seed,
        // the CLI always simulates at the gain-grid resolution
        dt: solved.schedule.grid().spacing(),
        store_every,
        empirical_terminal_cov: MatrixData::from_matrix(&cov),
        empirical_output_cov: MatrixData::from_matrix(&output_cov),
        empirical_mean_energy: mean_energy,
        predicted_energy: predicted,
        checks,
        pass,
    })
}

/// Writes `summary.json`.
pub fn write_summary_json(dir: &Path, summary: &SimSummary) -> Result<()> {
    let mut out = create(dir, "summary.json")?;
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| CliError::Config(format!("cannot serialize summary: {e}")))?;
    out.write_all(text.as_bytes()).map_err(io_err("summary.json"))?;
    out.write_all(b"\n").map_err(io_err("summary.json"))
}
