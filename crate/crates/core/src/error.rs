use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid sparsity k = {k} for dimension d = {d}")]
    InvalidSparsity { k: usize, d: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot partition {rows} rows across {workers} workers")]
    InvalidPartition { rows: usize, workers: usize },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("degenerate descent cone: {0}")]
    DegenerateCone(&'static str),

    #[error("all {rows} encoded rows straggled at iteration {iter}")]
    DegenerateIteration { iter: usize, rows: usize },

    #[error("iterates diverged at iteration {iter} (relative error {rel_error:e})")]
    Divergence { iter: usize, rel_error: f64 },

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("phase boundary not bracketed for s in {rows:?}")]
    BoundaryNotBracketed { rows: Vec<usize> },

    #[error("exhaustive search over C({m}, {s}) = {count} subsets exceeds the limit of {limit}")]
    SearchTooLarge { m: usize, s: usize, count: f64, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Runtime failures (as opposed to invalid inputs).
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::DegenerateIteration { .. } | Error::BoundaryNotBracketed { .. }
        )
    }
}
