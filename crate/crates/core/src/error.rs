use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("polyline needs at least 2 points, got {0}")]
    PolylineTooShort(usize),

    #[error("polyline points {index} and {next} coincide")]
    DuplicatePoint { index: usize, next: usize },

    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("degenerate sampling radius: only {0} skeleton node(s)")]
    DegenerateSamplingRadius(usize),

    #[error("contraction solver failed at iteration {iteration}: {reason}")]
    SolverFailure { iteration: usize, reason: String },

    #[error("closed-loop skeleton unsupported")]
    ClosedLoop,

    #[error("circle underdetermined")]
    CircleUnderdetermined,

    #[error("recentering consumed skeleton")]
    RecenteringConsumedSkeleton,

    #[error("cusp in spline at point {0}")]
    Cusp(usize),

    #[error("open mesh cannot be voxelized as solid")]
    OpenMesh,

    #[error("voxel grid of {0} cells exceeds budget; use a larger voxel_size")]
    GridTooLarge(u128),

    #[error("voxel grids differ in origin, dims or voxel size")]
    GridMismatch,

    #[error("insufficient points: {0}")]
    InsufficientPoints(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
