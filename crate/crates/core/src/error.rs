use thiserror::Error;

/// Errors raised anywhere in the discretize/synthesize/simulate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("region `{region}` endpoint {value} is not a multiple of the mesh size 1/{n}")]
    Alignment { region: String, value: f64, n: usize },

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("assembly failure: {0}")]
    Assembly(String),

    #[error("observation region `{0}` is empty on this mesh")]
    EmptyRegion(String),

    #[error("input shape on `{region}` is not supported there: {reason}")]
    ShapeSupport { region: String, reason: String },

    #[error("expression `{expr}`: {reason}")]
    Expression { expr: String, reason: String },

    #[error("Newton iteration did not converge in {iterations} steps; residual history {history:?}")]
    Divergence { iterations: usize, history: Vec<f64> },

    #[error("singular Jacobian at Newton step {step}")]
    SingularJacobian { step: usize },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("nullspace reduction: divergence block is rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },

    #[error("eigensolver did not converge; best residuals {residuals:?}")]
    Eigen { residuals: Vec<f64> },

    #[error("Riccati equation ({equation}) failed: {reason}")]
    Riccati { equation: String, reason: String },

    #[error("Lyapunov solve failed: {0}")]
    Lyapunov(String),

    #[error("time step {step} failed: {reason}")]
    TimeStep { step: usize, reason: String },

    #[error("empty evaluation window [{0}, {1}]")]
    EmptyWindow(f64, f64),

    #[error("scenario field `{path}`: {reason}")]
    Schema { path: String, reason: String },

    #[error("scenario invalid: {0}")]
    Invariant(String),

    #[error("{0} artifact missing")]
    MissingArtifact(String),

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: String, reason: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
