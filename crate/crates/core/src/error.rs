use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("degenerate stack: stacked system has rank {rank} < {rows} rows")]
    DegenerateStack { rank: usize, rows: usize },
    #[error("rank deficient: {0}")]
    Rank(String),
    #[error("quadrature accuracy not reached (achieved error bound {achieved:e})")]
    AccuracyNotReached { achieved: f64 },
    #[error("size limit exceeded: n = {n} > {limit}")]
    SizeLimit { n: usize, limit: usize },
    #[error("degenerate plant: {0}")]
    DegeneratePlant(String),
    #[error("planted pattern missing from pattern set")]
    MissingPlant,
    #[error("infeasible target: projection residual {0:e}")]
    Infeasible(f64),
    #[error("inconsistent solution: {0}")]
    Inconsistent(String),
    #[error("schema error at line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
