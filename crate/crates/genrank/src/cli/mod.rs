//! Batch command-line surface: configuration, the seven subcommands, and
//! atomic output writing.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
//! failure.

mod commands;
mod config;

pub use commands::{
    cmd_build_vocab, cmd_cutoff, cmd_eval, cmd_generate, cmd_rerank, cmd_train, cmd_uncertainty,
};
pub use config::{require, require_existing, ExperimentConfig};

use std::path::Path;

use crate::error::Result;

/// Write `bytes` to `path` via a temp file + rename in the same directory,
/// so partial output is never observable.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{stem}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
