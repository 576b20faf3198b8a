use std::fmt;

use ecg_core::beatprep::BeatError;
use ecg_core::metrics::MetricsError;
use ecg_core::neural::NeuralError;
use ecg_core::raster::RasterError;
use ecg_core::trainer::TrainError;
use ecg_core::wfdb::WfdbError;

/// Process exit status. The numeric values are a scripting contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Data, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Numerical, message: message.into() }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }

    /// Prefixes the message, keeping the exit kind.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError { kind: self.kind, message: format!("{what}: {}", self.message) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<WfdbError> for CliError {
    fn from(e: WfdbError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<BeatError> for CliError {
    fn from(e: BeatError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::InvalidBounds { .. } | RasterError::UnsupportedChannelCount(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Neural(n) => n.into(),
            MetricsError::EmptySweep => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss(_) => CliError::numerical(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::usage(e.to_string()),
            TrainError::Neural(n) => n.into(),
            TrainError::Metrics(m) => m.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}
