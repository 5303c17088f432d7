use thiserror::Error;

/// Errors produced by the simulation core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("implausible state: {name} = {value:.3} K outside [173, 373] K")]
    Implausible { name: &'static str, value: f64 },

    #[error("step size underflow at t = {t:.3} s (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("controller failed at step {step}: {source}")]
    Controller {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("exogenous data gap: {0}")]
    DataGap(String),

    #[error("coverage gap: no sample for {0}")]
    CoverageGap(String),

    #[error("unsupported zone `{0}`")]
    UnsupportedZone(String),

    #[error("network: {0}")]
    Network(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("offline mode: {0}")]
    Offline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
