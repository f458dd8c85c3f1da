use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty pool")]
    EmptyPool,

    #[error("sample id {0} is out of range for a pool of {1}")]
    IdOutOfRange(usize, usize),

    #[error("sample id {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("sample id {0} appears more than once in the batch")]
    DuplicateId(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("budget {budget} exceeds the {available} available samples")]
    BudgetTooLarge { budget: usize, available: usize },

    #[error("batch size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("stale trajectory: cached for parameter version {cached}, agent is at {current}")]
    StaleTrajectory { cached: u64, current: u64 },

    #[error("reward baseline has not been initialized")]
    UninitializedBaseline,

    #[error("stale lookup table: built for labeled set {built:016x}, pool is at {current:016x}")]
    StaleLookupTable { built: u64, current: u64 },

    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error("{0}")]
    Probe(String),

    #[error("centroid separation {0} unreachable after 1000 attempts; try fewer clusters or a smaller spread")]
    CentroidSeparation(f64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("experiment matrix aborted in cell ({strategy}, seed {seed}): {source}; completed cells: {completed:?}")]
    MatrixAborted {
        strategy: String,
        seed: u64,
        completed: Vec<(String, u64)>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors a user can fix by changing inputs, as opposed to failures at run time.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. })
    }
}
