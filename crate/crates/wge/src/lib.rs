//! Files, tools and services around [`wge_core`].
//!
//! * [`format`]: canonical JSON for snapshots and demonstrations, lattice files.
//! * [`store`]: atomic writes and the `data/demos/<task>/<uuid>.json` layout.
//! * [`checkpoint`]: named-tensor checkpoints tied to their training config.
//! * [`run`]: training runs that write metrics, checkpoints and reports.
//! * [`bridge`]: the HTTP service used by the demonstration recorder.

pub mod bridge;
pub mod checkpoint;
pub mod cli;
pub mod format;
pub mod run;
pub mod store;

use std::path::PathBuf;

use thiserror::Error;
use wge_core::demo::DemoError;
use wge_core::dom::DomError;
use wge_core::dsl::ParseError;
use wge_core::env::EnvError;
use wge_core::trainer::TrainError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed {what} at line {line}, column {column}: {message}")]
    Parse { what: String, line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dom(#[from] DomError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("step expression: {0}")]
    Step(#[from] ParseError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
