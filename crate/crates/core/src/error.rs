use thiserror::Error;

/// Failures surfaced by the estimators and generators in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("value out of representable range: {0}")]
    Range(String),
    #[error("no observed samples")]
    NoObservedData,
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("rank-deficient normal equations")]
    RankDeficient,
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    #[error("coverage assumption violated: {0}")]
    Coverage(String),
    #[error("quadrature did not converge (estimated error {0:e})")]
    Quadrature(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
