//! CLI-level errors and the process exit-code taxonomy.

use std::fmt;
use std::path::PathBuf;

/// Why a binary file failed to parse. Each variant is a distinct,
/// scriptable failure mode.
#[derive(Debug)]
pub enum FormatError {
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    UnsupportedVersion { expected: u32, found: u32 },
    Truncated,
    /// Counts or dimensions in the header contradict each other or the
    /// payload.
    Inconsistent(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            FormatError::UnsupportedVersion { expected, found } => {
                write!(f, "unsupported version {found} (expected {expected})")
            }
            FormatError::Truncated => write!(f, "truncated payload"),
            FormatError::Inconsistent(msg) => write!(f, "inconsistent contents: {msg}"),
        }
    }
}

impl std::error::Error for FormatError {}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an invalid configuration. Exit code 2.
    Usage(String),
    /// Filesystem failure. Exit code 3.
    Io { path: PathBuf, source: std::io::Error },
    /// Unreadable or corrupt data/checkpoint file. Exit code 3.
    Format { path: PathBuf, source: FormatError },
    /// An error surfaced by the core library.
    Core(fne_core::Error),
}

/// Exit codes: 0 success, 2 usage/validation, 3 I/O, 4 numerical failure.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Format { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                fne_core::Error::NonFinite { .. }
                | fne_core::Error::ZeroNorm { .. }
                | fne_core::Error::ZeroWeights
                | fne_core::Error::TrackerNotReady => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => {
                write!(f, "{}: {source}", path.display())
            }
            CliError::Format { path, source } => {
                write!(f, "{}: {source}", path.display())
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Format { source, .. } => Some(source),
            CliError::Core(e) => Some(e),
            CliError::Usage(_) => None,
        }
    }
}

impl From<fne_core::Error> for CliError {
    fn from(e: fne_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attach the offending path to an I/O error.
pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}
