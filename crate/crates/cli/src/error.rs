use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] optport::Error),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),

    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("cannot serialise JSON: {0}")]
    Json(#[from] serde_json::Error),

    /// The run completed but some results are missing or checks failed;
    /// `output` still goes to stdout.
    #[error("{message}")]
    Reported {
        message: String,
        code: u8,
        output: String,
    },
}

impl CliError {
    /// 0 success, 1 verification failure, 2 usage/config, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        use optport::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                E::Io(_)
                | E::Parse(_)
                | E::Validation(_)
                | E::Domain(_)
                | E::Dimension(_)
                | E::Nu(_)
                | E::Alpha(_)
                | E::InsufficientSamples { .. } => 2,
                _ => 3,
            },
            CliError::Csv(_) | CliError::Json(_) => 3,
            CliError::Reported { code, .. } => *code,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
