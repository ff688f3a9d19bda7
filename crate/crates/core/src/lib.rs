//! Codes, circuits and classical decoders for quantum memory experiments
//! on bivariate bicycle codes.

pub mod bposd;
pub mod circuit;
pub mod code;
pub mod gf2;
pub mod oracle;
pub mod sim;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("invalid CNOT schedule: {0}")]
    Schedule(String),
    #[error("probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("fault site {index} out of range ({count} sites)")]
    FaultSiteOutOfRange { index: usize, count: usize },
    #[error("syndrome has no solution")]
    InconsistentSyndrome,
    #[error("{what} {got} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        got: usize,
        limit: usize,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}
