use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SINGULARITY: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("run aborted: {0}")]
    Singularity(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => EXIT_CONFIG,
            CliError::Singularity(_) => EXIT_SINGULARITY,
            CliError::Failed(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

impl From<underact::Error> for CliError {
    fn from(e: underact::Error) -> Self {
        match e {
            underact::Error::Schema(m) => CliError::Schema(m),
            e if e.is_singularity() => CliError::Singularity(e.to_string()),
            underact::Error::Analysis(m) | underact::Error::NonPeriodic(m) => CliError::Failed(m),
            e => CliError::Config(e.to_string()),
        }
    }
}
