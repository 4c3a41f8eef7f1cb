use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const PARTIAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] medmarg::Error),

    #[error("{failed} of {total} scenarios failed")]
    PartialStudy { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use medmarg::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Input(_) | CliError::Config(_) | CliError::Io { .. } => exit::INPUT,
            CliError::Core(E::InvalidInput(_) | E::InvalidConfig(_)) => exit::INPUT,
            CliError::Core(_) => exit::NUMERICAL,
            CliError::PartialStudy { .. } => exit::PARTIAL,
        }
    }

    /// Extra advice printed after the message.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(medmarg::Error::Separation { .. }) => Some("rerun with --firth"),
            CliError::Core(medmarg::Error::SingleClass) => Some("check the --y-col mapping"),
            _ => None,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
