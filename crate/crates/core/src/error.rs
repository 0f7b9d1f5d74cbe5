use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("joint {joint} = {value} outside limits [{lower}, {upper}]")]
    JointLimit {
        joint: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid arm model: {0}")]
    InvalidArm(String),

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("non-finite residual in `{term}` term at waypoint {index}")]
    NonFinite { term: &'static str, index: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("length mismatch: {states} states vs {configs} joint configurations")]
    LengthMismatch { states: usize, configs: usize },

    #[error("degenerate null-space projection at waypoint {index}")]
    DegenerateProjection { index: usize },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
