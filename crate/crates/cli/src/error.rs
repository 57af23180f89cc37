use std::path::PathBuf;

use lockwalk_core::construction::ConstructionError;
use lockwalk_core::diagnostics::InsufficientSamples;
use lockwalk_core::GroupSpec;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("resource cap: {0}")]
    Resource(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Insufficient(#[from] InsufficientSamples),
    #[error("structurally inapplicable: {0}")]
    Inapplicable(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Insufficient(_) => 5,
            CliError::Inapplicable(_) => 6,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// A failed lock search means no lock exists when the group has no ICC
    /// factor; otherwise it is the configured horizon running out.
    pub fn construction(e: ConstructionError, spec: &GroupSpec) -> Self {
        match e {
            ConstructionError::Schedule(_) => CliError::Config(e.to_string()),
            ConstructionError::LockSearch { .. } if !spec.has_icc_factor() => {
                CliError::Inapplicable(format!("{e}; the group has no ICC factor so no lock exists"))
            }
            ConstructionError::LockSearch { .. } | ConstructionError::Resource { .. } => {
                CliError::Resource(e.to_string())
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
