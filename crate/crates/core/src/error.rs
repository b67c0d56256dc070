use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// Parameter outside the family's open domain. `distance` is the signed
    /// distance to the nearest boundary (negative means outside).
    #[error("{family}: parameter {detail} outside domain (distance to boundary {distance:.3e})")]
    Domain { family: &'static str, detail: String, distance: f64 },

    #[error("{family}: Fisher information singular at {parameter} = {pole} (value {value}, guard band {guard:e})")]
    Singularity { family: &'static str, parameter: &'static str, pole: f64, value: f64, guard: f64 },

    #[error("observation {y} is not in the support interior of {family}")]
    OutsideSupport { family: &'static str, y: f64 },

    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),

    #[error("NaN input in {0}")]
    NanInput(&'static str),

    #[error("matrix singular or not positive definite in {context} (condition number {condition:e})")]
    SingularMatrix { context: &'static str, condition: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Io(String),

    /// An error raised while evaluating the model at regressor `x`.
    #[error("{source} at x = {x:?}")]
    AtRegressor { x: Vec<f64>, source: Box<Error> },

    /// An error raised at step `t` of a time-series recursion with
    /// linear predictors `theta`.
    #[error("step t = {t}, theta = {theta:?}: {source}")]
    AtStep { t: usize, theta: Vec<f64>, source: Box<Error> },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
