use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("dimension mismatch: {left} vs {right}")]
    Dim { left: usize, right: usize },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("block size {0} is too small, blocks need at least 2 pairs")]
    BlockTooSmall(usize),

    #[error("too few blocks for a variance estimate: {0}")]
    TooFewBlocks(usize),

    #[error("block statistics have zero variance")]
    DegenerateVariance,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resource limit: {what} is {got}, limit {limit}")]
    ResourceLimit {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gamma fit failed: {0}")]
    Fit(String),

    #[error("kernel selection failed: {0}")]
    Selection(String),

    #[error("sample budget exceeded: largest n tried was {largest_n}")]
    BudgetExceeded { largest_n: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
