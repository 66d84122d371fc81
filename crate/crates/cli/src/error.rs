use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Where in the config a problem was found.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub line: Option<usize>,
    pub key: Option<String>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`"),
            (Some(l), None) => write!(f, "line {l}"),
            (None, Some(k)) => write!(f, "key `{k}`"),
            (None, None) => write!(f, "config"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{location}: {message}")]
    Config { location: Location, message: String },

    #[error(transparent)]
    Numerical(#[from] fpe_dss::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Self {
        CliError::Config {
            location: Location {
                line,
                key: key.map(str::to_owned),
            },
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// `2` for config problems, `3` for numerical failures, `1` for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// One line: `error kind=<kind> exit=<code> detail="<message>"`.
    pub fn summary(&self) -> String {
        let detail = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error kind={} exit={} detail=\"{detail}\"", self.kind(), self.exit_code())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
