use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("integration diverged at step {step} (t = {time}): non-finite state")]
    Divergence { step: usize, time: f64 },

    #[error("undefined bound: {0}")]
    UndefinedBound(String),

    #[error("zero denominator factor: {0}")]
    ZeroDenominator(String),

    #[error("state is not an equilibrium (vector-field residual {residual:e}, scale {scale:e})")]
    NotEquilibrium { residual: f64, scale: f64 },

    #[error("Lyapunov function undefined at index {index}: {reason}")]
    LogarithmDomain { index: usize, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate range for `{name}`: lo = hi = {value}")]
    DegenerateRange { name: String, value: f64 },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("rank-deficient regression design: column `{column}` is collinear with {with:?}")]
    RankDeficient { column: String, with: Vec<String> },

    #[error("empty bin {bin} of {bins}; try fewer bins")]
    EmptyBin { bin: usize, bins: usize },

    #[error("control `{name}` = {value} outside [0, {max}]")]
    ControlBound {
        name: &'static str,
        value: f64,
        max: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sweep iteration {iteration}: {source}")]
    Sweep {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mask `{mask}`: {source}")]
    Mask {
        mask: String,
        #[source]
        source: Box<Error>,
    },

    #[error("singular efficacy: {0}")]
    SingularEfficacy(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),
}

pub(crate) fn ensure_finite(label: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{label}: {values:?}")))
    }
}
