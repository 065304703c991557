//! Benchmark fixtures for the covariance steering pipeline.
//!
//! Two deterministic models at different sizes: the damped oscillator used
//! throughout the test suite (two states, one input, scalar output) and a
//! four-state companion chain driven from its last coordinate. Both steer an
//! output variance down to 1/16 over a unit horizon, so the solver works
//! roughly equally hard per state in each.

use covsteer::{MatrixFn, ModelSpec, SpdMatrix, Target};
use nalgebra::DMatrix;

/// Two-state damped oscillator with position output.
pub fn oscillator() -> ModelSpec {
    ModelSpec::ou_oscillator()
}

/// Four-state companion chain, actuated and disturbed through the last state.
///
/// The characteristic polynomial is (s^2 + s + 1)^2, so the drift is stable
/// and the chain is controllable from the single input.
pub fn chain4() -> ModelSpec {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            -1.0, -2.0, -3.0, -2.0,
        ],
    );
    let b = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
    let c = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
    let sigma0 = SpdMatrix::new(DMatrix::identity(4, 4) * 0.5).unwrap();
    let target = Target::Output(SpdMatrix::new(DMatrix::from_element(1, 1, 1.0 / 16.0)).unwrap());
    ModelSpec::new(MatrixFn::constant(a), MatrixFn::constant(b), c, 1.0, sigma0, target)
        .expect("benchmark fixture is a valid model")
}
