//! On-disk formats: proposal/actionness/feature CSVs, the binary flow
//! container, PGM frame sequences, ranked JSONL, and the run configuration.
//!
//! Parsers reject malformed input outright and report the offending line or
//! byte count; writers are bit-exact round-trip partners of their readers and
//! replace files atomically (temp file + rename).

pub mod config;
pub mod flow;
pub mod frames;
pub mod ranked;
pub mod tables;

pub use config::RunConfig;
pub use flow::{load_flow, write_flow};
pub use frames::{load_frames, write_frames};
pub use ranked::{load_ranked, write_ranked, RankedRecord};
pub use tables::{
    load_actionness, load_features, load_proposals, write_actionness, write_features,
    write_proposals, ActionnessTable,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to `path` via a temp file in the same directory followed by
/// an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
