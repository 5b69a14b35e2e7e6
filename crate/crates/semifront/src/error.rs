//! Error taxonomy shared by every pipeline stage.
//!
//! Variants are grouped by how a frontend should report them: input problems
//! (rejected before numerics ran), numerical failures (a method could not
//! complete), and I/O. `exit_code` encodes that grouping for the CLI.

use thiserror::Error;

/// Failure modes of the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Input rejected before any numerics ran: missing tags, out-of-range
    /// parameters, assumption violations (message names a witness density).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A coefficient field produced a non-finite value.
    #[error("field `{field}` evaluated to a non-finite value at rho = {rho}")]
    Evaluation { field: String, rho: f64 },

    /// The ODE integrator could not complete the requested stage.
    #[error("solver failure during {stage}: {detail}")]
    Solver { stage: String, detail: String },

    /// Critical-speed bisection could not establish or shrink a bracket.
    #[error("bisection failure: {detail}")]
    Bisection { detail: String },

    /// The requested pasting is not admissible for this model.
    #[error("pasting impossible: {0}")]
    Paste(String),

    /// The explicit PDE scheme left the invariant region.
    #[error("evolution aborted at t = {t}: {detail}")]
    Stability { t: f64, detail: String },

    /// Filesystem or serialization problems.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for frontends: 2 precondition, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Precondition(_) | Error::Evaluation { .. } | Error::Paste(_) => 2,
            Error::Solver { .. } | Error::Bisection { .. } | Error::Stability { .. } => 3,
            Error::Io(_) => 4,
        }
    }

    /// Shorthand used throughout the crate.
    pub fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
