use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point has {got} coordinates, layout expects {expected}")]
    Layout { expected: String, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("not certified at lo = {lo}: certificate value {value}")]
    NotCertified { lo: f64, value: f64 },

    #[error("state parameter solver failed: {0}")]
    Bracket(String),

    #[error("unsupported pairing: {0}")]
    Unsupported(String),

    #[error("axis value {0} not found on heatmap")]
    Lookup(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
