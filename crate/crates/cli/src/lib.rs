//! Batch front-end: reads a JSON experiment config, runs one command and
//! writes CSV series and JSON summaries into an output directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use thiserror::Error;

pub use commands::Command;
pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

/// Library errors caused by the input rather than by a computation.
pub(crate) fn classify(e: gvi_core::Error) -> CliError {
    use gvi_core::Error as E;
    match e {
        E::InvalidInput(_) | E::InstanceMismatch(_) | E::InvalidInstance(_) => CliError::Config(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

/// Caps the global rayon pool at the value of `GVI_THREADS`, when set.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("GVI_THREADS must be a positive integer, got `{v}`")))?;
    // a pool that is already initialised (e.g. a second call in-process) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Reads the config at `config`, creates `out` and runs `command`.
pub fn run(command: Command, config: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    std::fs::create_dir_all(out)?;
    commands::dispatch(command, &cfg, out)
}
