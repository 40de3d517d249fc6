use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its legal range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("covariate level index {0} is not a level of the model")]
    UnknownLevel(usize),

    /// A covariate level has no observations in the auxiliary sample.
    #[error("covariate level {0} is absent from the auxiliary sample")]
    EmptyLevel(usize),

    #[error("degenerate boundary: {0}")]
    DegenerateBoundary(String),

    #[error("optimizer did not converge: {0}")]
    Convergence(String),

    /// Nuisance estimates were computed from observations that are also in
    /// the main sample.
    #[error("estimates overlap the main sample")]
    SampleOverlap,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user configuration rather than by the
    /// data or the environment.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_) | Error::UnknownModel(_))
    }
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidConfig(msg.into()))
}
