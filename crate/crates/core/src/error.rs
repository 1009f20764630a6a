//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by simulation, estimation, and rate computations.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented domain (zero transmittance,
    /// non-positive variance, and so on).
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration file could not be parsed; the message names the
    /// offending key and line.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine left its validity region (non-physical symplectic
    /// eigenvalue, failed convergence, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// I/O failure while reading or writing waveforms, configs, or reports.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
