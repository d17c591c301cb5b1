//! Result-file helpers.
//!
//! All result files are written whole: content is assembled in memory and
//! lands via a temp-file rename, so a crashed run never leaves a partial
//! file behind. CSV dialect is fixed: comma separator, dot decimal, one
//! header row, LF line endings. Floats use the shortest round-trip
//! representation, which keeps files bit-exact across reruns.

use std::path::Path;

use crate::error::{Error, Result};

/// Writes `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Assembles a CSV document from a header and pre-rendered rows.
pub fn csv_document(header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    out
}

/// Renders an `f64` in the fixed CSV dialect.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
