use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("circulant embedding not nonnegative: min eigenvalue {min_eigenvalue:.3e} (relative negative mass {negative_mass:.3e})")]
    NonEmbeddable {
        min_eigenvalue: f64,
        negative_mass: f64,
    },
    #[error("could not solve the region {{G <= {x}}}: {reason}")]
    RegionUnsolved { x: f64, reason: String },
    #[error("no Hermite coefficient above {tol:e} up to order {max_order}")]
    RankNotFound { tol: f64, max_order: usize },
    #[error("distribution not evaluable at {at}: {what}")]
    EvaluationDomain { at: f64, what: String },
    #[error("empirical quantile of an empty prefix")]
    EmptyPrefix,
    #[error("no integer p in ({lower}, {upper}]")]
    EmptyInterval { lower: f64, upper: f64 },
    #[error("log-log regression needs positive values, got {value} at n = {n}")]
    NonPositiveValue { n: usize, value: f64 },
    #[error("{0}")]
    InvalidPlan(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
