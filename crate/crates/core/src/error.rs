use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("too many steps: p = {p} exceeds n - m = {available}")]
    TooManySteps { p: usize, available: usize },

    #[error("invalid arguments: {0}")]
    InvalidArguments(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index beyond ingested data: k = {k}, ingested = {ingested}")]
    BeyondIngested { k: usize, ingested: usize },

    #[error("monitoring not started: k = {k} must exceed m = {m}")]
    MonitoringNotStarted { k: usize, m: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate conditioning: increase replicates (no surviving rows at interval {interval})")]
    DegenerateConditioning { interval: usize },

    #[error("Monte Carlo thresholds require univariate i.i.d. mode (dim = {dim})")]
    McRequiresUnivariate { dim: usize },

    #[error("p exceeds m - m': p = {p}, limit = {limit}")]
    StepsExceedRescaledHorizon { p: usize, limit: usize },

    #[error("bandwidth too large: ell = {ell} must be below m = {m}")]
    BandwidthTooLarge { ell: usize, m: usize },

    #[error("learning sample too small for horizon: m' = {m_prime} (need at least 2)")]
    LearningTooSmall { m_prime: usize },

    #[error("threshold mismatch: {0}")]
    ThresholdMismatch(String),

    #[error("monitoring finished")]
    MonitoringFinished,

    #[error("no trials")]
    NoTrials,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
