//! CLI failure taxonomy and process exit codes.
//!
//! Every failure funnels into one of five classes, each owning an exit
//! code so scripts can branch on the kind of problem without parsing
//! stderr:
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 2    | configuration could not be read or parsed           |
//! | 3    | model is not controllable over the horizon          |
//! | 4    | solver rejected the model or failed numerically     |
//! | 5    | simulation failed a statistical acceptance check    |
//! | 6    | verification found residuals out of tolerance       |

use std::fmt;

use covsteer::SteerError;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable file, TOML syntax error, or malformed matrix layout.
    Config(String),
    /// Solver-side failure; `NotControllable` gets its own exit code.
    Solver(SteerError),
    /// Named statistics that fell outside their acceptance bands.
    Statistical(Vec<String>),
    /// Named residual checks that failed verification.
    Verification(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(SteerError::NotControllable { .. }) => 3,
            CliError::Solver(_) => 4,
            CliError::Statistical(_) => 5,
            CliError::Verification(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Solver(err) => write!(f, "{err}"),
            CliError::Statistical(names) => {
                write!(f, "statistical checks failed: {}", names.join(", "))
            }
            CliError::Verification(names) => {
                write!(f, "verification checks failed: {}", names.join(", "))
            }
        }
    }
}

impl From<SteerError> for CliError {
    fn from(err: SteerError) -> Self {
        CliError::Solver(err)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
