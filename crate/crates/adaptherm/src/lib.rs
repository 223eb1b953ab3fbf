//! File formats, training orchestration and the command line for
//! `adaptherm-core`.
//!
//! Everything here needs `std`: JSON configs, the view-factor cache,
//! `dataset.bin`, model checkpoints, CSV reports and thread pools.

use std::path::{Path, PathBuf};

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datafile;
pub mod eval;
pub mod report;
pub mod simulate;
pub mod structures;
pub mod train;
pub mod vfcache;

pub use adaptherm_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("surface `{surface}`: field `{field}` {reason}")]
    Field {
        surface: String,
        field: String,
        reason: String,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] adaptherm_core::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if is_numeric(e) => 2,
            _ => 1,
        }
    }
}

fn is_numeric(e: &adaptherm_core::Error) -> bool {
    use adaptherm_core::Error as E;
    match e {
        E::Instability { .. } | E::NonFiniteLoss { .. } => true,
        E::Sample { source, .. } => is_numeric(source),
        _ => false,
    }
}

/// Version string written into every output header.
pub const TOOL_VERSION: &str = concat!("adaptherm ", env!("CARGO_PKG_VERSION"));
