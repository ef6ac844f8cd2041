use thiserror::Error;

/// Errors raised by the device model, the counter and the challenge engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PufError {
    #[error("invalid ring specification: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ring index {index} out of range for a device with {count} rings")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("invalid digest: {0}")]
    InvalidDigest(String),
    #[error("invalid wire encoding: {0}")]
    InvalidEncoding(String),
    #[error("population of {0} device(s) is too small, need at least 2")]
    InsufficientPopulation(usize),
}

pub type Result<T, E = PufError> = std::result::Result<T, E>;
