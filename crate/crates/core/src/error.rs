use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("time {t} s lies outside the observation interval [0, {t_max}] s")]
    TimeOutOfRange { t: f64, t_max: f64 },

    #[error("empty chirp prior for f0 = {f0} Hz: [{lo}, {hi}] Hz/s does not meet the chirp bounds")]
    EmptyPrior { f0: f64, lo: f64, hi: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("probability {0} outside the open interval (0, 1)")]
    Probability(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Configuration problems are reported differently from runtime failures
    /// by the command-line front end.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Json(_) | Error::Parse(_) | Error::Probability(_)
        )
    }
}
