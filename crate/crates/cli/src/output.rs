//! Atomic file output. Every artifact is written to a temporary file in
//! the destination directory and renamed into place, so a crashed or
//! interrupted command never leaves a truncated file behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use quditsim_core::Result;

/// Write `contents` to `dir/name` atomically, creating `dir` if needed.
/// Returns the final path.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub fn write_json(dir: &Path, name: &str, doc: &serde_json::Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write_atomic(dir, name, &text)
}

/// Render rows of joint outcomes as the shots CSV (one column per site).
pub fn shots_csv(outcomes: &[Vec<usize>]) -> String {
    let mut text = String::new();
    if let Some(first) = outcomes.first() {
        let header: Vec<String> = (0..first.len()).map(|s| format!("site_{s}")).collect();
        text.push_str(&header.join(","));
        text.push('\n');
    }
    for row in outcomes {
        let cells: Vec<String> = row.iter().map(|o| o.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}
