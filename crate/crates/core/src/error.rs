use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("scatter not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value outside the family's domain: {0}")]
    Domain(String),

    #[error("newton iteration did not converge for margin {margin}, cluster {cluster}")]
    NewtonNonConvergence { margin: usize, cluster: usize },

    #[error("likelihood unbounded toward singular Σ")]
    UnboundedLikelihood,

    #[error("optimizer stagnated after {evaluations} evaluations (best log-likelihood {loglik})")]
    OptimizerStagnation {
        evaluations: usize,
        loglik: f64,
        best: Vec<f64>,
    },

    #[error("grid too large: {points} quadrature points")]
    GridTooLarge { points: usize },

    #[error("insufficient clusters for exact null (q = {q}, need more than {needed})")]
    InsufficientClusters { q: usize, needed: usize },

    #[error("series not converged after {terms} terms (partial sum {partial})")]
    SeriesNotConverged { terms: usize, partial: f64 },

    #[error("degenerate regression block")]
    DegenerateRegressionBlock,

    #[error("vertex sets overlap")]
    OverlappingSets,

    #[error("graph error: {0}")]
    Graph(String),
}
