//! Command-line front end for the covariance steering library.
//!
//! The binary exposes three subcommands over the same model description:
//!
//! * `solve` — compute the optimal policy, write `solution.json`,
//!   `gains.csv` and `covariance.csv`;
//! * `simulate` — run the closed-loop ensemble, write `trajectories.csv`
//!   and `summary.json`, and compare empirical moments against the
//!   prediction at three standard errors;
//! * `verify` — re-derive every optimality and consistency residual,
//!   print them as a table, and compare against an independent solver.
//!
//! Models come either from a TOML file (`--config`) or a named built-in
//! (`--example`). File formats are documented in `docs/file_formats.md`;
//! exit codes in [`error`].

pub mod bundle;
pub mod config;
pub mod error;
pub mod outputs;
pub mod run;
