use thiserror::Error;

pub type Result<T, E = PhmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PhmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration diverged at step {step} (t = {time:.6} s)")]
    Diverged { step: usize, time: f64 },

    #[error("gappy matrix is ill-conditioned (cond = {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("{modes} modes cannot be recovered from {points} sampling points")]
    Underdetermined { modes: usize, points: usize },

    #[error("schedule hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("bisection failed: {0}")]
    Bracket(String),

    #[error("levenberg-marquardt step is singular at mu = {mu:.3e}")]
    SingularStep { mu: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<PhmError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PhmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PhmError::InvalidArgument(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            PhmError::Diverged { .. }
            | PhmError::IllConditioned { .. }
            | PhmError::SingularStep { .. }
            | PhmError::Bracket(_) => true,
            PhmError::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
