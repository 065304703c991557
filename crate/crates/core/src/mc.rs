//! Monte Carlo validation of the steering policy.
//!
//! Simulates the closed-loop diffusion
//!
//! ```text
//! dx = (A(t) + B(t)K(t))·x dt + B(t)·dw,      x(0) ~ N(0, Σ₀)
//! ```
//!
//! with Euler–Maruyama, holding the gain constant from the grid node at
//! or before the current time. Each path draws from its own counter-mode
//! RNG stream keyed by `(seed, path index)`, so results are bitwise
//! reproducible for a given seed regardless of thread count or
//! scheduling. Paths run in parallel into preallocated storage.
//!
//! The per-path control effort `∫‖u‖² dt` is accumulated at simulation
//! resolution, so the batch mean estimates the expected energy the
//! static bridge predicts.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynbridge::GainSchedule;
use crate::error::{Result, SteerError};
use crate::model::ModelSpec;
use crate::symmat::{jacobi_eigen, SymMatrix, SPD_TOL};

/// Simulation parameters.
#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Time step; `None` uses the gain grid spacing. Rounded so a whole
    /// number of steps covers the horizon.
    pub dt: Option<f64>,
    pub seed: u64,
    /// Keep every `store_every`-th simulation node (the initial and
    /// terminal nodes are always kept).
    pub store_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_paths: 1000, dt: None, seed: 42, store_every: 10 }
    }
}

/// Simulated ensemble: stored states and per-path control effort.
#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    state_dim: usize,
    n_paths: usize,
    times: Vec<f64>,
    /// Path-major storage: `states[path][stored node][coordinate]`.
    states: Vec<f64>,
    energies: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Times of the stored nodes.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn num_stored(&self) -> usize {
        self.times.len()
    }

    /// State of one path at one stored node.
    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let stride = self.times.len() * self.state_dim;
        let base = path * stride + node * self.state_dim;
        &self.states[base..base + self.state_dim]
    }

    /// Realized `∫‖u‖²dt` per path.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn mean_energy(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }
}

/// Runs the closed-loop ensemble.
pub fn simulate_paths(
    spec: &ModelSpec,
    schedule: &GainSchedule,
    cfg: &SimConfig,
) -> Result<TrajectoryBatch> {
    if cfg.n_paths == 0 {
        return Err(SteerError::InsufficientPaths { required: 1, actual: 0 });
    }
    if cfg.store_every == 0 {
        return Err(SteerError::InvalidConfig("store_every must be at least 1".into()));
    }
    let horizon = spec.horizon();
    if (schedule.grid().horizon() - horizon).abs() > 1e-12 * horizon {
        return Err(SteerError::InvalidConfig("gain schedule spans a different horizon".into()));
    }
    let dt_req = cfg.dt.unwrap_or_else(|| schedule.grid().spacing());
    if !(dt_req.is_finite() && dt_req > 0.0 && dt_req <= horizon) {
        return Err(SteerError::InvalidConfig(format!("invalid simulation step {dt_req}")));
    }
    let nsteps = ((horizon / dt_req).round() as usize).max(1);
    let dt = horizon / nsteps as f64;
    let sqrt_dt = dt.sqrt();
    let n = spec.n();
    let m = spec.m();

    // everything time-dependent is tabulated once and shared read-only
    let a_tab: Vec<DMatrix<f64>> = (0..nsteps).map(|j| spec.a().eval(j as f64 * dt)).collect();
    let b_tab: Vec<DMatrix<f64>> = (0..nsteps).map(|j| spec.b().eval(j as f64 * dt)).collect();
    let k_tab: Vec<&DMatrix<f64>> = (0..nsteps).map(|j| schedule.gain_at(j as f64 * dt)).collect();
    let init_factor = spec.sigma0().cholesky().l();

    let stored: Vec<usize> = (0..=nsteps)
        .filter(|&j| j % cfg.store_every == 0 || j == nsteps)
        .collect();
    let times: Vec<f64> = stored.iter().map(|&j| j as f64 * dt).collect();
    let stride = stored.len() * n;
    let mut states = vec![0.0f64; cfg.n_paths * stride];
    let mut energies = vec![0.0f64; cfg.n_paths];

    states
        .par_chunks_mut(stride)
        .zip(energies.par_chunks_mut(1))
        .enumerate()
        .for_each(|(path, (chunk, energy_out))| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path as u64);
            let normal = StandardNormal;
            let mut xi = DVector::zeros(n);
            for v in xi.iter_mut() {
                *v = normal.sample(&mut rng);
            }
            let mut x = DVector::zeros(n);
            x.gemv(1.0, &init_factor, &xi, 0.0);

            let mut drift = DVector::zeros(n);
            let mut u = DVector::zeros(m);
            let mut kick = DVector::zeros(m);
            let mut energy = 0.0;
            let mut slot = 0usize;
            for j in 0..=nsteps {
                if slot < stored.len() && stored[slot] == j {
                    chunk[slot * n..(slot + 1) * n].copy_from_slice(x.as_slice());
                    slot += 1;
                }
                if j == nsteps {
                    break;
                }
                u.gemv(1.0, k_tab[j], &x, 0.0);
                energy += u.norm_squared() * dt;
                drift.gemv(1.0, &a_tab[j], &x, 0.0);
                for i in 0..m {
                    let noise: f64 = normal.sample(&mut rng);
                    kick[i] = u[i] * dt + noise * sqrt_dt;
                }
                x.axpy(dt, &drift, 1.0);
                x.gemv(1.0, &b_tab[j], &kick, 1.0);
            }
            energy_out[0] = energy;
        });

    Ok(TrajectoryBatch { state_dim: n, n_paths: cfg.n_paths, times, states, energies })
}

/// Sample mean and unbiased covariance of the ensemble at a stored node.
pub fn empirical_moments(batch: &TrajectoryBatch, node: usize) -> Result<(DVector<f64>, SymMatrix)> {
    if batch.n_paths < 2 {
        return Err(SteerError::InsufficientPaths { required: 2, actual: batch.n_paths });
    }
    if node >= batch.num_stored() {
        return Err(SteerError::InvalidConfig(format!(
            "stored node {node} out of range (have {})",
            batch.num_stored()
        )));
    }
    let n = batch.state_dim;
    let mut mean = DVector::zeros(n);
    for path in 0..batch.n_paths {
        for (i, v) in batch.state(path, node).iter().enumerate() {
            mean[i] += v;
        }
    }
    mean /= batch.n_paths as f64;
    let mut cov = DMatrix::zeros(n, n);
    let mut centered = DVector::zeros(n);
    for path in 0..batch.n_paths {
        for (i, v) in batch.state(path, node).iter().enumerate() {
            centered[i] = v - mean[i];
        }
        cov.syger(1.0, &centered, &centered, 1.0);
    }
    cov /= (batch.n_paths - 1) as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    Ok((mean, SymMatrix::from_symmetric(cov)))
}

/// Principal axes of a confidence ellipsoid.
#[derive(Clone, Debug)]
pub struct Tube {
    /// `level·√λ` per axis, largest first.
    pub radii: DVector<f64>,
    /// Matching unit axes as columns, each with its largest component
    /// made positive so the output is deterministic.
    pub axes: DMatrix<f64>,
}

/// Ellipsoid radii `level·√λᵢ` and axes of a covariance matrix.
/// Eigenvalues within rounding of zero are clamped; genuinely negative
/// ones are rejected.
pub fn tube_radii(cov: &SymMatrix, level: f64) -> Result<Tube> {
    if !(level.is_finite() && level > 0.0) {
        return Err(SteerError::InvalidConfig(format!("tube level must be positive, got {level}")));
    }
    let n = cov.dim();
    let (eigs, vectors) = jacobi_eigen(cov.mat());
    let max_eig = eigs[n - 1].max(0.0);
    let mut radii = DVector::zeros(n);
    let mut axes = DMatrix::zeros(n, n);
    // eigenvalues arrive ascending; radii are reported largest first
    for (slot, idx) in (0..n).rev().enumerate() {
        let lambda = eigs[idx];
        if lambda < -SPD_TOL * max_eig - f64::MIN_POSITIVE {
            return Err(SteerError::NotPositiveDefinite { min_eig: lambda });
        }
        radii[slot] = level * lambda.max(0.0).sqrt();
        let mut axis = vectors.column(idx).clone_owned();
        let lead = axis.iter().enumerate().max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
        if let Some((_, &v)) = lead {
            if v < 0.0 {
                axis = -axis;
            }
        }
        axes.set_column(slot, &axis);
    }
    Ok(Tube { radii, axes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynbridge::{pi_schedule, propagate_closed_loop, terminal_pi};
    use crate::model::{compute_prior_moments, MatrixFn, Target};
    use crate::staticbridge::solve_static;
    use crate::symmat::SpdMatrix;
    use approx::assert_relative_eq;

    fn scalar_bridge(target: f64, steps: usize) -> (ModelSpec, GainSchedule) {
        let spec = ModelSpec::new(
            MatrixFn::constant(DMatrix::zeros(1, 1)),
            MatrixFn::constant(DMatrix::from_element(1, 1, 1.0)),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
            SpdMatrix::identity(1),
            Target::FullState(SpdMatrix::new(DMatrix::from_element(1, 1, target)).unwrap()),
        )
        .unwrap();
        let moments = compute_prior_moments(&spec, steps).unwrap();
        let sol = solve_static(&spec, &moments).unwrap();
        let schedule = pi_schedule(&spec, &moments, &terminal_pi(&spec, &sol)).unwrap();
        (spec, schedule)
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let (spec, schedule) = scalar_bridge(1.0, 50);
        let cfg = SimConfig { n_paths: 64, dt: None, seed: 7, store_every: 5 };
        let a = simulate_paths(&spec, &schedule, &cfg).unwrap();
        let b = simulate_paths(&spec, &schedule, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.energies, b.energies);
        let other = SimConfig { seed: 8, ..cfg };
        let c = simulate_paths(&spec, &schedule, &other).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn storage_keeps_endpoints() {
        let (spec, schedule) = scalar_bridge(1.0, 10);
        let cfg = SimConfig { n_paths: 3, dt: Some(0.1), seed: 1, store_every: 3 };
        let batch = simulate_paths(&spec, &schedule, &cfg).unwrap();
        // sim nodes 0..=10, kept: 0, 3, 6, 9, 10
        assert_eq!(batch.num_stored(), 5);
        assert_relative_eq!(batch.times()[0], 0.0);
        assert_relative_eq!(batch.times()[4], 1.0);
        assert_relative_eq!(batch.times()[1], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn ensemble_matches_propagated_covariance() {
        // steered scalar bridge: empirical terminal variance should sit
        // near the target within Monte Carlo and Euler bias
        let (spec, schedule) = scalar_bridge(1.0, 400);
        let cfg = SimConfig { n_paths: 4000, dt: None, seed: 42, store_every: 400 };
        let batch = simulate_paths(&spec, &schedule, &cfg).unwrap();
        let last = batch.num_stored() - 1;
        let (mean, cov) = empirical_moments(&batch, last).unwrap();
        // mean ~ N(0, var/paths): 4 standard errors
        assert!(mean[0].abs() <= 4.0 * (1.0f64 / 4000.0).sqrt(), "mean = {}", mean[0]);
        // sample variance of a Gaussian: se ≈ var·√(2/(paths-1))
        let band = 4.0 * (2.0f64 / 3999.0).sqrt() + 0.01;
        assert!(
            (cov.mat()[(0, 0)] - 1.0).abs() <= band,
            "terminal variance = {}",
            cov.mat()[(0, 0)]
        );
        // realized control effort tracks the golden-ratio prediction
        assert!(
            (batch.mean_energy() - 0.24514384755981367).abs() <= 0.02,
            "mean energy = {}",
            batch.mean_energy()
        );
    }

    #[test]
    fn uncontrolled_ensemble_matches_prior() {
        // fixed-point target: gains vanish, ensemble follows the prior
        let base = ModelSpec::ou_oscillator();
        let moments0 = compute_prior_moments(&base, 200).unwrap();
        let n = base.n();
        let prior_term = moments0.joint().mat().view((n, n), (n, n)).clone_owned();
        let spec = ModelSpec::new(
            base.a().clone(),
            base.b().clone(),
            DMatrix::identity(2, 2),
            base.horizon(),
            base.sigma0().clone(),
            Target::FullState(SpdMatrix::new(prior_term.clone()).unwrap()),
        )
        .unwrap();
        let moments = compute_prior_moments(&spec, 200).unwrap();
        let sol = solve_static(&spec, &moments).unwrap();
        let schedule = pi_schedule(&spec, &moments, &terminal_pi(&spec, &sol)).unwrap();
        let cov_sched = propagate_closed_loop(&spec, &moments, &schedule).unwrap();
        let cfg = SimConfig { n_paths: 4000, dt: None, seed: 3, store_every: 200 };
        let batch = simulate_paths(&spec, &schedule, &cfg).unwrap();
        let (_, cov) = empirical_moments(&batch, batch.num_stored() - 1).unwrap();
        let gap = (cov.mat() - &prior_term).norm() / prior_term.norm();
        assert!(gap <= 0.1, "relative covariance gap = {gap}");
        assert!(batch.mean_energy() <= 1e-10);
        let prop_gap = (&cov_sched.sigma[200] - &prior_term).norm() / prior_term.norm();
        assert!(prop_gap <= 1e-9, "propagation gap = {prop_gap}");
    }

    #[test]
    fn moment_estimator_needs_two_paths() {
        let (spec, schedule) = scalar_bridge(1.0, 10);
        let cfg = SimConfig { n_paths: 1, dt: None, seed: 1, store_every: 1 };
        let batch = simulate_paths(&spec, &schedule, &cfg).unwrap();
        assert!(matches!(
            empirical_moments(&batch, 0),
            Err(SteerError::InsufficientPaths { required: 2, actual: 1 })
        ));
    }

    #[test]
    fn rejects_empty_or_misconfigured_runs() {
        let (spec, schedule) = scalar_bridge(1.0, 10);
        let none = SimConfig { n_paths: 0, ..SimConfig::default() };
        assert!(matches!(
            simulate_paths(&spec, &schedule, &none),
            Err(SteerError::InsufficientPaths { .. })
        ));
        let zero_store = SimConfig { store_every: 0, ..SimConfig::default() };
        assert!(matches!(
            simulate_paths(&spec, &schedule, &zero_store),
            Err(SteerError::InvalidConfig(_))
        ));
        let bad_dt = SimConfig { dt: Some(-0.1), ..SimConfig::default() };
        assert!(matches!(
            simulate_paths(&spec, &schedule, &bad_dt),
            Err(SteerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn tube_frames_are_sorted_and_sign_fixed() {
        let cov = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0])).unwrap();
        let tube = tube_radii(&cov, 3.0).unwrap();
        assert_relative_eq!(tube.radii[0], 6.0, epsilon = 1e-12);
        assert_relative_eq!(tube.radii[1], 3.0, epsilon = 1e-12);
        // principal axis is ±e₂, sign-fixed to +e₂
        assert_relative_eq!(tube.axes[(1, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(tube.axes[(0, 1)], 1.0, epsilon = 1e-12);
        let indefinite = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        assert!(matches!(
            tube_radii(&indefinite, 3.0),
            Err(SteerError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(tube_radii(&cov, 0.0), Err(SteerError::InvalidConfig(_))));
    }
}
