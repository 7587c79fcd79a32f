use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("point {point:?} lies outside the closed domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("coefficient evaluation failed: {0}")]
    CoefficientEvaluation(String),
    #[error("problem has no barrier function")]
    MissingBarrier,
    #[error("unknown builtin problem `{0}`")]
    UnknownProblem(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("node {0} is not an interior node")]
    NotInterior(usize),
    #[error("zero-length diffusion leg at node {node} with nonzero diffusion")]
    ZeroLeg { node: usize },
    #[error("CFL violation at node {node}, control {control}: explicit center coefficient {coefficient:.3e} < 0")]
    CflViolation {
        node: usize,
        control: usize,
        coefficient: f64,
    },
    #[error("policy iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    PolicyIteration { iterations: usize, residual: f64 },
    #[error("singular frozen-policy system at row {0}")]
    SingularSystem(usize),
    #[error("linear solver did not converge (residual {0:.3e})")]
    LinearSolver(f64),
    #[error("no reference solution available")]
    NoReference,
    #[error("expression error: {0}")]
    Expression(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
