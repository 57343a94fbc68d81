use std::io;
use std::path::PathBuf;

use lora_hull_core::diagnostics::DiagnosticsError;
use lora_hull_core::sweep::{PlanError, SweepError};
use lora_hull_core::synthetic::SynthError;
use lora_hull_core::{AdapterError, LinalgError};

/// Every failure the command line can report. Each variant maps to one
/// process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 1,
            Error::Io { .. } | Error::Parse { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

fn linalg(e: &LinalgError) -> bool {
    matches!(e, LinalgError::NotConverged { .. })
}

fn classify(numerical: bool, message: String) -> Error {
    if numerical {
        Error::Numerical(message)
    } else {
        Error::Validation(message)
    }
}

impl From<LinalgError> for Error {
    fn from(e: LinalgError) -> Self {
        classify(linalg(&e), e.to_string())
    }
}

impl From<AdapterError> for Error {
    fn from(e: AdapterError) -> Self {
        classify(matches!(&e, AdapterError::Linalg(l) if linalg(l)), e.to_string())
    }
}

impl From<DiagnosticsError> for Error {
    fn from(e: DiagnosticsError) -> Self {
        let numerical = match &e {
            DiagnosticsError::Linalg(l) => linalg(l),
            DiagnosticsError::Adapter(AdapterError::Linalg(l)) => linalg(l),
            _ => false,
        };
        classify(numerical, e.to_string())
    }
}

impl From<SynthError> for Error {
    fn from(e: SynthError) -> Self {
        classify(matches!(&e, SynthError::Linalg(l) if linalg(l)), e.to_string())
    }
}

impl From<PlanError> for Error {
    fn from(e: PlanError) -> Self {
        Error::Validation(e.to_string())
    }
}

impl From<SweepError> for Error {
    fn from(e: SweepError) -> Self {
        classify(
            matches!(&e, SweepError::Compose { source: AdapterError::Linalg(l), .. } if linalg(l)),
            e.to_string(),
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
