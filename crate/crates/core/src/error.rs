use thiserror::Error;

/// Errors raised by the toolkit. The CLI maps variants onto exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("coset enumeration exceeded {0} cosets; the presentation may define an infinite group")]
    EnumerationExceeded(usize),
    #[error("degenerate partial product: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
