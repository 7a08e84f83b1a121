use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or incomplete configuration document.
    #[error("config schema: {0}")]
    Schema(String),

    /// Parameter outside the domain where the model is defined.
    #[error("domain: {0}")]
    Domain(String),

    #[error("non-finite field at z = {z}, t = {t} (last good z = {last_good_z})")]
    NonFinite { z: f64, t: f64, last_good_z: f64 },

    #[error("stability guard exceeded: dt * max rate = {value:.4} > {limit}")]
    Stability { value: f64, limit: f64 },

    #[error("fit: {0}")]
    Fit(String),

    #[error("peak tracking: {0}")]
    Tracking(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
