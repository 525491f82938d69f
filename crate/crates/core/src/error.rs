use thiserror::Error;

/// Errors produced by model evaluation, analysis and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    /// The experiment design cannot identify the quantity (e.g. `i == j`).
    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: {message}")]
    InvalidRow { line: usize, message: String },

    #[error("unit mismatch: {0}")]
    UnitMismatch(String),

    #[error("unknown experiment type `{0}`")]
    UnknownExperimentType(String),

    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u32),

    #[error("unknown instruction `{0}`")]
    UnknownInstruction(String),

    #[error("fixture `{0}` does not match its recorded checksum")]
    FixtureChecksum(String),

    #[error("unknown fixture set `{0}`")]
    UnknownFixture(String),

    #[error("structured input: {0}")]
    Structured(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used as the diagnostic prefix by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "E_VALIDATION",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::Parse { .. } => "E_PARSE",
            Error::InvalidRow { .. } => "E_ROW",
            Error::UnitMismatch(_) => "E_UNIT",
            Error::UnknownExperimentType(_) => "E_EXPERIMENT_TYPE",
            Error::UnsupportedSchema(_) => "E_SCHEMA",
            Error::UnknownInstruction(_) => "E_INSTRUCTION",
            Error::FixtureChecksum(_) => "E_FIXTURE",
            Error::UnknownFixture(_) => "E_FIXTURE",
            Error::Structured(_) => "E_PARSE",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(line: usize, column: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
