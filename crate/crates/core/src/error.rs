use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("singular angle at node ({i}, {j}): sin(theta) = {sin:.3e}")]
    SingularAngle { i: usize, j: usize, sin: f64 },

    #[error("angle field is not sine-Gordon compatible: residual {residual:.3e} exceeds {threshold:.3e}")]
    Incompatible { residual: f64, threshold: f64 },

    #[error("frame integration is path dependent: sweep mismatch {residual:.3e} exceeds {tolerance:.3e}")]
    PathDependent { residual: f64, tolerance: f64 },

    #[error("degenerate immersion at {count} node(s), first at ({i}, {j})")]
    Degenerate { count: usize, i: usize, j: usize },

    #[error("conformal factor is not positive at node ({i}, {j})")]
    NonPositiveFactor { i: usize, j: usize },

    #[error("test function {index} has support touching the grid boundary")]
    TestSupport { index: usize },

    #[error("linear solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("Newton iteration did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unknown catalog chart `{0}`")]
    UnknownChart(String),

    #[error("chart not accepted: anisotropy {anisotropy:.3e}, skew {skew:.3e}, threshold {threshold:.3e}")]
    ChartRejected { anisotropy: f64, skew: f64, threshold: f64 },

    #[error("not developable on this patch: {0}")]
    NotDevelopable(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
