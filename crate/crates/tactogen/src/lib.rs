//! IO companion to `tactogen-core`: bit-exact file formats (PNM images,
//! HMCK checkpoints, JSONL manifests, WAV/CSV waveforms, spectral reports),
//! dataset layout, and the building blocks of the CLI.

pub mod checkpoint;
pub mod corpus_build;
pub mod dataset;
pub mod manifest;
pub mod pnm;
pub mod report;
pub mod runrec;
pub mod wav;

use std::fmt;
use std::path::PathBuf;

/// Errors split by exit-code class: contract violations exit 1,
/// operational/IO failures exit 2.
#[derive(Debug)]
pub enum IoError {
    /// Input violated a format or layout contract (bad header, CRC, dims).
    Format { path: PathBuf, offset: Option<u64>, message: String },
    /// Underlying filesystem failure.
    Io { path: PathBuf, source: std::io::Error },
    /// Contract violation raised by the core.
    Core(tactogen_core::Error),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Format { path, offset: Some(off), message } => {
                write!(f, "{}: parse error at byte {off}: {message}", path.display())
            }
            IoError::Format { path, offset: None, message } => {
                write!(f, "{}: {message}", path.display())
            }
            IoError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            IoError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<tactogen_core::Error> for IoError {
    fn from(e: tactogen_core::Error) -> Self {
        IoError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, IoError>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
    let path = path.into();
    move |source| IoError::Io { path, source }
}

pub fn format_err(path: impl Into<PathBuf>, offset: Option<u64>, message: impl fmt::Display) -> IoError {
    IoError::Format { path: path.into(), offset, message: format!("{message}") }
}

/// Number of worker threads for embarrassingly parallel stages, from
/// HAPTIC_THREADS. Defaults to 1 so everything stays bit-deterministic
/// without opting in.
pub fn worker_threads() -> usize {
    std::env::var("HAPTIC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}
