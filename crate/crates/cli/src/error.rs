use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config keys or values; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] emojinet::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    ConfigFile { path: PathBuf, line: usize, msg: String },
    #[error(
        "vocabulary {vocab} (hash {found}) is not the one the checkpoint was trained with (hash {expected}); \
         token ids would be silently remapped"
    )]
    VocabMismatch {
        vocab: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    /// 2 for usage and configuration mistakes, 1 for everything that went
    /// wrong while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::ConfigFile { .. } | CliError::Core(emojinet::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
