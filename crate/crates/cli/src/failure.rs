use std::fmt;
use std::process::ExitCode;

use procnoise::attack::AttackError;
use procnoise::dataset::DatasetError;
use procnoise::image_ops::ImageError;
use procnoise::metrics::MetricsError;
use procnoise::oracle::OracleError;
use procnoise::params::ParamError;

/// A command failure, classified by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Transport(String),
    Data(String),
}

impl Failure {
    pub fn code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 2,
            Failure::Transport(_) => 3,
            Failure::Data(_) => 4,
        })
    }

    pub fn data(context: impl fmt::Display, e: impl fmt::Display) -> Self {
        Failure::Data(format!("{context}: {e}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Transport(m) => write!(f, "oracle: {m}"),
            Failure::Data(m) => write!(f, "data: {m}"),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Config(m) => Failure::Usage(m),
            OracleError::Image(e) => Failure::Data(e.to_string()),
            e => Failure::Transport(e.to_string()),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ParamError> for Failure {
    fn from(e: ParamError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<AttackError> for Failure {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::InvalidSpec(m) => Failure::Usage(m),
            AttackError::Dataset(e) => e.into(),
            AttackError::Oracle(e) => e.into(),
            AttackError::Metrics(e) => e.into(),
            AttackError::Aborted { source, .. } => Failure::Transport(source.to_string()),
        }
    }
}
