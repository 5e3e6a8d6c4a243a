//! CSV output: RFC-4180-style quoting, LF line endings, `.` decimal
//! separator, shortest round-trip float formatting.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Quotes a field only when it contains a comma, quote, or newline.
pub fn field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

pub struct CsvFile {
    buf: Vec<u8>,
}

impl CsvFile {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }

    /// `#`-prefixed metadata lines before the header.
    pub fn comment(&mut self, line: &str) {
        self.buf.extend_from_slice(b"# ");
        self.buf.extend_from_slice(line.as_bytes());
        self.buf.push(b'\n');
    }

    pub fn raw_line(&mut self, line: &str) {
        self.buf.extend_from_slice(line.as_bytes());
        self.buf.push(b'\n');
    }

    pub fn record<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let line = fields
            .into_iter()
            .map(|f| field(f.as_ref()))
            .collect::<Vec<_>>()
            .join(",");
        self.raw_line(&line);
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        f.write_all(&self.buf)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

impl Default for CsvFile {
    fn default() -> Self {
        Self::new()
    }
}

/// Linearly interpolated quantile of a sorted slice (the common "type 7"
/// definition). `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
