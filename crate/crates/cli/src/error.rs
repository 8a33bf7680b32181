use clonekd::backend::BackendError;
use clonekd::corpus::CorpusError;
use clonekd::stabilize::StabilizeError;
use clonekd::teacher::TeacherError;

/// Command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("external service exhausted: {0}")]
    External(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::External(_) => 4,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(m) => CliError::Config(m),
            BackendError::Plugin(m) => CliError::External(format!("backend plugin: {m}")),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<StabilizeError> for CliError {
    fn from(e: StabilizeError) -> Self {
        match e {
            StabilizeError::Backend(b) => b.into(),
            StabilizeError::Config(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TeacherError> for CliError {
    fn from(e: TeacherError) -> Self {
        match e {
            TeacherError::CredentialMissing(_) => CliError::Config(e.to_string()),
            TeacherError::Client(_) => CliError::External(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
