//! Error type shared by every module, with the exit-code taxonomy used by
//! the command-line driver: 1 = invalid configuration, 2 = numerical
//! failure, 3 = hypothesis failure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("variable `{0}` is referenced but no binding was supplied")]
    UnboundVariable(&'static str),

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("evaluation failed at node {index} (x = {x}): {source}")]
    AtNode {
        index: usize,
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular pivot at row {row} (magnitude {value:e} below 1e-300)")]
    SingularPivot { row: usize, value: f64 },

    #[error("non-finite value detected at time step {step}")]
    NonFinite { step: usize },

    #[error("Newton iteration failed to converge at time step {step} ({iters} iterations)")]
    NewtonDiverged { step: usize, iters: usize },

    #[error(
        "adjoint identity check failed: defect {defect:e} exceeds {tol:e}; \
         the discrete transpose no longer matches the forward map"
    )]
    AdjointGate { defect: f64, tol: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("hypothesis failure: {0}")]
    Hypothesis(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: configuration problems are 1, failures
    /// of the numerics are 2, and failures of the structural hypotheses are 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::UnboundVariable(_)
            | Error::Grid(_)
            | Error::Shape(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => 1,
            Error::Domain { .. }
            | Error::AtNode { .. }
            | Error::SingularPivot { .. }
            | Error::NonFinite { .. }
            | Error::NewtonDiverged { .. }
            | Error::AdjointGate { .. }
            | Error::Numerical(_) => 2,
            Error::Hypothesis(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
