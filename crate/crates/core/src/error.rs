//! Shared error type for the library.
//!
//! Domain and configuration mistakes surface as `Err`; index bugs and broken
//! internal invariants panic like any other out-of-bounds access.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A target value cannot be reached by the function being inverted.
    #[error("range error: {0}")]
    Range(String),

    /// A model specification is internally inconsistent or unsupported.
    #[error("invalid specification: {0}")]
    Spec(String),

    /// The clock vanished where the coupling needs it strictly positive.
    #[error("degenerate clock: {0}")]
    DegenerateClock(String),

    /// A stated precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numerical computation left the representable or finite range.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
