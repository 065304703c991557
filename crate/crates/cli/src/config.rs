//! Model configuration: TOML schema, conversion to a [`ModelSpec`], and
//! a canonical hash over the solver-relevant inputs.
//!
//! Matrices are written row-major as nested arrays. The drift and input
//! matrices accept either a constant matrix or an array of `(t, value)`
//! samples on a uniform time grid, interpolated linearly between nodes:
//!
//! ```toml
//! horizon = 1.0
//! a = [[0.0, 1.0], [-1.0, -1.0]]      # constant
//! b = [[0.0], [1.0]]
//! c = [[0.0, 1.0]]
//! sigma0 = [[0.5, 0.0], [0.0, 0.5]]
//!
//! [target]
//! kind = "output"                      # or "state"
//! covariance = [[0.0625]]
//! ```
//!
//! A time-varying drift replaces the constant form with samples:
//!
//! ```toml
//! [[a.samples]]
//! t = 0.0
//! value = [[0.0, 1.0], [-1.0, -1.2]]
//!
//! [[a.samples]]
//! t = 1.0
//! value = [[0.0, 1.0], [-1.8, -1.2]]
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use covsteer::{MatrixFn, ModelSpec, SpdMatrix, Target};

use crate::error::{CliError, Result};

/// Parsed model file; field order here fixes the canonical hash layout.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub a: MatrixInput,
    pub b: MatrixInput,
    pub c: Vec<Vec<f64>>,
    pub sigma0: Vec<Vec<f64>>,
    pub target: TargetConfig,
}

/// Constant matrix, or samples of a time-varying one.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Constant(Vec<Vec<f64>>),
    Sampled { samples: Vec<MatrixSample> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct MatrixSample {
    pub t: f64,
    pub value: Vec<Vec<f64>>,
}

/// Terminal covariance constraint: the full state, or an output slice.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetConfig {
    State { covariance: Vec<Vec<f64>> },
    Output { covariance: Vec<Vec<f64>> },
}

/// Reads and parses a model file.
pub fn load_config(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

/// The built-in `--example ou` model: a unit-damped oscillator driven
/// through its velocity channel, steered so the velocity variance at
/// `T = 1` becomes 1/16.
pub fn ou_example() -> ModelConfig {
    ModelConfig {
        horizon: 1.0,
        a: MatrixInput::Constant(vec![vec![0.0, 1.0], vec![-1.0, -1.0]]),
        b: MatrixInput::Constant(vec![vec![0.0], vec![1.0]]),
        c: vec![vec![0.0, 1.0]],
        sigma0: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        target: TargetConfig::Output { covariance: vec![vec![0.0625]] },
    }
}

/// Resolves a built-in example by name.
pub fn example_config(name: &str) -> Result<ModelConfig> {
    match name {
        "ou" => Ok(ou_example()),
        other => Err(CliError::Config(format!(
            "unknown example '{other}' (available: ou)"
        ))),
    }
}

fn to_dense(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::Config(format!("matrix '{name}' is empty")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("matrix '{name}' has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("matrix '{name}' has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn to_matrix_fn(name: &str, input: &MatrixInput) -> Result<MatrixFn> {
    match input {
        MatrixInput::Constant(rows) => Ok(MatrixFn::constant(to_dense(name, rows)?)),
        MatrixInput::Sampled { samples } => {
            let mut times = Vec::with_capacity(samples.len());
            let mut values = Vec::with_capacity(samples.len());
            for sample in samples {
                times.push(sample.t);
                values.push(to_dense(name, &sample.value)?);
            }
            MatrixFn::sampled(times, values).map_err(CliError::Solver)
        }
    }
}

/// Converts a parsed configuration into a validated model.
pub fn build_spec(config: &ModelConfig) -> Result<ModelSpec> {
    let a = to_matrix_fn("a", &config.a)?;
    let b = to_matrix_fn("b", &config.b)?;
    let c = to_dense("c", &config.c)?;
    let sigma0 = SpdMatrix::new(to_dense("sigma0", &config.sigma0)?)?;
    let target = match &config.target {
        TargetConfig::State { covariance } => {
            Target::FullState(SpdMatrix::new(to_dense("target.covariance", covariance)?)?)
        }
        TargetConfig::Output { covariance } => {
            Target::Output(SpdMatrix::new(to_dense("target.covariance", covariance)?)?)
        }
    };
    ModelSpec::new(a, b, c, config.horizon, sigma0, target).map_err(CliError::Solver)
}

/// SHA-256 over the canonical JSON form of the solver-relevant inputs:
/// the model fields and the grid resolution. Seeds, path counts, and
/// output locations do not participate, so re-running with a different
/// seed keeps the hash stable.
pub fn config_hash(config: &ModelConfig, steps: usize) -> String {
    #[derive(Serialize)]
    struct Hashed<'a> {
        config: &'a ModelConfig,
        steps: usize,
    }
    let canonical = serde_json::to_string(&Hashed { config, steps })
        .expect("configuration serializes infallibly");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
