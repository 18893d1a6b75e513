use std::process::ExitCode;

use gsmcad_core::cad::CadError;
use gsmcad_core::dataset::DatasetError;
use gsmcad_core::diffusion::DiffusionError;
use gsmcad_core::geometry::GeometryError;
use gsmcad_core::metrics::MetricsError;
use gsmcad_core::model::ModelError;
use thiserror::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input, failed validation or bad configuration.
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
            CliError::NonFinite(_) => 3,
        })
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(CadError, GeometryError, MetricsError, ModelError, serde_json::Error);

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        if e.is_non_finite() {
            CliError::NonFinite(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}
