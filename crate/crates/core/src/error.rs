use thiserror::Error;

/// Errors raised by the mapping, planning and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid GP hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("invalid sensor model: {0}")]
    InvalidSensorModel(String),

    #[error("camera footprint is empty")]
    EmptyFootprint,

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    /// The innovation covariance was not positive definite, e.g. duplicate rows
    /// with vanishing noise.
    #[error("degenerate measurement: innovation covariance is singular (pivot {pivot} = {value:e})")]
    DegenerateMeasurement { pivot: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid trajectory request: {0}")]
    InvalidTrajectory(String),

    #[error("invalid CMA-ES configuration: {0}")]
    InvalidCmaesConfig(String),

    #[error("invalid planner configuration: {0}")]
    InvalidPlannerConfig(String),

    /// A configuration value failed validation; `key` is the dotted path.
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("failed to parse config: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
