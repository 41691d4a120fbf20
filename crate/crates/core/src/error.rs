use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by corpus loading and the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The file or directory could not be read at all.
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// The file was readable but its content is not a usable project.
    #[error("malformed project {path}: {reason}")]
    MalformedProject { path: PathBuf, reason: String },

    /// A corpus directory yielded zero loadable projects.
    #[error("no loadable projects in {dir}")]
    EmptyCorpus { dir: PathBuf },

    /// The corpus loaded but contains no scripts to analyze.
    #[error("corpus contains no scripts")]
    NoScripts,
}

pub type Result<T> = std::result::Result<T, Error>;
