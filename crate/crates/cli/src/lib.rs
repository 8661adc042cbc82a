//! Command-line driver: configuration, subcommands and result files.
//!
//! Every output file is named `<subcommand>_<fingerprint>[_suffix].<ext>`,
//! where the fingerprint hashes the effective configuration.

pub mod commands;
pub mod config;
pub mod emit;

use std::path::PathBuf;

pub use config::{ConfigFile, PairRule};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] codedopt::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for configuration problems, 3 for runtime failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_runtime() => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 4,
        }
    }
}

/// Sizes the global rayon pool from `CODEDOPT_THREADS` (unset or 0 means automatic).
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CODEDOPT_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        raw.trim().parse().map_err(|_| CliError::Config(format!("CODEDOPT_THREADS must be an integer, got {raw:?}")))?;
    if threads > 0 {
        // A second initialization only happens in tests; the first pool wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}
