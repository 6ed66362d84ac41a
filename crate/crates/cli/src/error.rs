use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {message}")]
    Config {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
        field: Option<String>,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Input { path: String, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] frag_core::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, e: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Io { .. } | Self::Input { .. } => 3,
            Self::Core(_) => 4,
            Self::Failed(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Io { .. } => "io",
            Self::Input { .. } => "input",
            Self::Core(_) => "computation",
            Self::Failed(_) => "check-failed",
        }
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Core(e.into())
            }
        })*
    };
}

core_from!(
    frag_core::KernelError,
    frag_core::GridError,
    frag_core::SolverError,
    frag_core::SimulationError,
    frag_core::BranchingError,
    frag_core::SpectralError,
    frag_core::LindbladError
);

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

/// Machine-readable form written to stderr.
pub fn error_json(e: &CliError) -> String {
    let (line, column, field) = match e {
        CliError::Config { line, column, field, .. } => (*line, *column, field.as_deref()),
        CliError::Input { line, .. } => (Some(*line), None, None),
        _ => (None, None, None),
    };
    let message = match e {
        CliError::Config { message, .. } => message.clone(),
        other => other.to_string(),
    };
    let report = ErrorReport {
        error: e.kind(),
        message,
        line,
        column,
        field,
    };
    serde_json::to_string(&report).expect("error report serialises")
}
