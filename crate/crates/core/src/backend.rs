//! Transport-agnostic error for pluggable external backends (detector,
//! pseudonymizer, substituter, judge, response sources). HTTP implementations
//! live in the gateway crate.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend returned malformed payload: {0}")]
    Malformed(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
}
