//! Cross-validation of the integration layer against independently
//! computed references: a scaling-and-squaring matrix exponential, the
//! block-exponential form of the Gramian, and direct block inversion.

use covsteer::{
    compute_prior_moments, solve, verify_solution, MatrixFn, ModelSpec, SpdMatrix, SteerError,
    Target,
};
use nalgebra::DMatrix;

/// Matrix exponential by scaling and squaring with a Taylor core; this
/// shares nothing with the Runge-Kutta tabulation it is checked against.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let squarings = (a.norm() / 0.25).log2().ceil().max(0.0) as i32;
    let b = a / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn constant_spec(a: DMatrix<f64>, b: DMatrix<f64>, horizon: f64) -> ModelSpec {
    let n = a.nrows();
    ModelSpec::new(
        MatrixFn::constant(a),
        MatrixFn::constant(b),
        DMatrix::identity(n, n),
        horizon,
        SpdMatrix::identity(n),
        Target::FullState(SpdMatrix::identity(n)),
    )
    .unwrap()
}

#[test]
fn transition_matches_exponential_for_constant_drift() {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[0.3, -1.2, 0.4, 0.9, -0.5, 0.2, -0.3, 0.1, -0.8],
    );
    let b = DMatrix::identity(3, 3);
    let spec = constant_spec(a.clone(), b, 0.7);
    let moments = compute_prior_moments(&spec, 400).unwrap();
    let reference = expm(&(a * 0.7));
    let err = (moments.phi_end() - &reference).norm() / reference.norm();
    assert!(err <= 1e-11, "transition error = {err}");
}

#[test]
fn gramian_matches_block_exponential() {
    // the Gramian is the off-diagonal block of exp([[-A, BBᵀ], [0, Aᵀ]]·T)
    // premultiplied by the transition matrix
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let horizon = 1.0;
    let spec = constant_spec(a.clone(), b.clone(), horizon);
    let moments = compute_prior_moments(&spec, 400).unwrap();

    let bbt = &b * b.transpose();
    let mut block = DMatrix::zeros(4, 4);
    block.view_mut((0, 0), (2, 2)).copy_from(&(-&a));
    block.view_mut((0, 2), (2, 2)).copy_from(&bbt);
    block.view_mut((2, 2), (2, 2)).copy_from(&a.transpose());
    let big = expm(&(block * horizon));
    let f12 = big.view((0, 2), (2, 2)).clone_owned();
    let f22 = big.view((2, 2), (2, 2)).clone_owned();
    let reference = f22.transpose() * f12;
    let err = (moments.gram_total() - &reference).norm() / reference.norm();
    assert!(err <= 1e-10, "gramian error = {err}");
}

#[test]
fn precision_blocks_match_direct_inversion() {
    let spec = ModelSpec::ou_oscillator();
    let moments = compute_prior_moments(&spec, 300).unwrap();
    let blocks = moments.precision_blocks(spec.sigma0()).unwrap();
    let direct = moments.joint_spd().unwrap().inverse();
    let n = spec.n();
    let init_err = (&blocks.init - direct.view((0, 0), (n, n))).norm() / blocks.init.norm();
    let cross_err = (&blocks.cross - direct.view((0, n), (n, n))).norm() / blocks.cross.norm();
    let term_err = (&blocks.term - direct.view((n, n), (n, n))).norm() / blocks.term.norm();
    assert!(init_err <= 1e-8, "init error = {init_err}");
    assert!(cross_err <= 1e-8, "cross error = {cross_err}");
    assert!(term_err <= 1e-8, "term error = {term_err}");
}

#[test]
fn transition_error_decays_at_fourth_order() {
    let spec = ModelSpec::ou_oscillator();
    let reference = expm(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]));
    let err_at = |steps: usize| {
        let moments = compute_prior_moments(&spec, steps).unwrap();
        (moments.phi_end() - &reference).norm()
    };
    let coarse = err_at(50);
    let fine = err_at(100);
    let rate = coarse / fine;
    assert!((12.0..=20.0).contains(&rate), "rate = {rate} (coarse {coarse}, fine {fine})");
}

/// Piecewise-linear stiffness ramp; the entries are linear in `t`, so the
/// sampled interpolation reproduces them exactly at nodes and midpoints.
fn ramp_spec(target_var: f64) -> ModelSpec {
    let times: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let values: Vec<DMatrix<f64>> = times
        .iter()
        .map(|&t| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -(1.0 + 0.8 * t), -1.2]))
        .collect();
    ModelSpec::new(
        MatrixFn::sampled(times, values).unwrap(),
        MatrixFn::constant(DMatrix::from_row_slice(2, 1, &[0.0, 1.0])),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        1.0,
        SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.7])).unwrap(),
        Target::Output(SpdMatrix::new(DMatrix::from_element(1, 1, target_var)).unwrap()),
    )
    .unwrap()
}

#[test]
fn time_varying_pipeline_verifies() {
    // uncontrolled position variance at T is 0.368; steering to 0.2 keeps
    // the forward factor P(t) positive definite, so the whole diagnostic
    // suite applies
    let spec = ramp_spec(0.2);
    let solved = solve(&spec, 1000).unwrap();
    let report = verify_solution(&spec, &solved).unwrap();
    assert!(report.is_valid(), "report = {report:?}");
    // the position variance lands on target
    let last = solved.covariances.sigma.last().unwrap();
    assert!((last[(0, 0)] - 0.2).abs() <= 1e-8, "terminal = {}", last[(0, 0)]);
}

#[test]
fn aggressive_squeeze_solves_but_leaves_factor_indefinite() {
    // a 9x variance reduction still steers exactly, but Σ₀⁻¹ − Π(0) loses
    // positive definiteness, so the boundary diagnostics must refuse to
    // report residuals rather than invert an indefinite factor
    let spec = ramp_spec(0.04);
    let solved = solve(&spec, 1000).unwrap();
    let last = solved.covariances.sigma.last().unwrap();
    assert!((last[(0, 0)] - 0.04).abs() <= 1e-8, "terminal = {}", last[(0, 0)]);
    match verify_solution(&spec, &solved) {
        Err(SteerError::NotPositiveDefinite { min_eig }) => {
            assert!(min_eig < 0.0, "min_eig = {min_eig}")
        }
        other => panic!("expected indefinite-factor rejection, got {other:?}"),
    }
}
