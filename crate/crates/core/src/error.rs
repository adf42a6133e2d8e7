use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rotation: angle {0} rad is at the cut locus of log")]
    DegenerateRotation(f64),
    #[error("rank-deficient configuration: {0}")]
    RankDeficient(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("tree placement failed: placed {placed} of {requested} trunks")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("insufficient trunk evidence: {have} trunk points, need at least {need}")]
    InsufficientTrunkPoints { have: usize, need: usize },
    #[error("degenerate registration Hessian (condition number {0:.3e})")]
    DegenerateHessian(f64),
    #[error("optimization requires a prior; the graph is gauge-free")]
    NoPrior,
    #[error("normal equations are not positive definite")]
    IndefiniteSystem,
    #[error("node {0} is not inside the smoothing window")]
    NodeOutsideWindow(u64),
    #[error("dataset inconsistency: {0}")]
    Dataset(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
