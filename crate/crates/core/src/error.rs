use thiserror::Error;

/// Errors shared across the planning stack.
///
/// `Infeasible` is reserved for well-formed problems that have no solution
/// (goal not reachable within the horizon); malformed inputs surface as
/// `Config` or `Scenario`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical collapse: {0}")]
    NumericalCollapse(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("export error: {0}")]
    Export(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
