use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Core(#[from] msmc::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl BenchError {
    /// 2 for configuration problems, 3 for numerical failures, 4 for a
    /// failed verdict in check mode, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Parse(_) => 2,
            BenchError::Core(e) if e.is_numerical() => 3,
            BenchError::Core(msmc::Error::Config(_)) | BenchError::Core(msmc::Error::InvalidInput(_)) => 2,
            BenchError::Check(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
