use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("UJ angle vector must have an even length of at least 2, got {0}")]
    BadAngleCount(usize),
    #[error("length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("angle {0} rad is outside (-pi, pi)")]
    AngleOutOfRange(f64),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file is missing the header line `{expected}`")]
    MissingHeader { expected: String },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid value for {field}: {value} ({constraint})")]
    Invalid {
        field: String,
        value: String,
        constraint: String,
    },
    #[error("failed to serialize model: {0}")]
    Serialize(String),
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, value: impl ToString, constraint: &str) -> Self {
        ModelError::Invalid {
            field: field.into(),
            value: value.to_string(),
            constraint: constraint.to_string(),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("non-finite state at t = {time} s ({what})")]
    NonFinite {
        time: f64,
        what: &'static str,
        last_valid: Box<crate::dynamics::SimState>,
    },
    #[error("mass matrix is not positive definite at t = {time} s")]
    NotPositiveDefinite { time: f64 },
    #[error("invalid command: {0}")]
    BadCommand(String),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("action must have length {expected}, got {got}")]
    ActionLength { expected: usize, got: usize },
    #[error("episode has finished; reset before stepping again")]
    Finished,
    #[error("invalid episode configuration: {0}")]
    Config(String),
    #[error("could not place the box without intersecting the robot after {0} attempts")]
    Placement(usize),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("inputs must have equal length (got {0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("correlation undefined for a constant vector")]
    Constant,
    #[error("window [{start}, {end}) exceeds series of length {len}")]
    Window { start: usize, end: usize, len: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}
