//! Plain-text file formats.
//!
//! - comparisons: one per line, `i,j,k` (triplet) or `i,j,l,k`, 0-based;
//!   lines starting with `#` are comments
//! - embeddings: CSV, one row per object, no header
//! - labels: CSV `index,label` per line
//! - traces: CSV with a header row

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::embedding::{Comparison, ComparisonSet, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::optimizer::EpochTrace;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

pub fn parse_comparisons(text: &str, n: usize, path: &Path) -> Result<ComparisonSet> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<usize> = line
            .split(',')
            .map(|f| f.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, lineno + 1, e.to_string()))?;
        let c = match fields[..] {
            [i, j, k] => Comparison::triplet(i, j, k),
            [i, j, l, k] => Comparison::quadruplet(i, j, l, k),
            _ => return Err(parse_err(path, lineno + 1, format!("expected 3 or 4 fields, got {}", fields.len()))),
        };
        c.validate(n).map_err(|e| parse_err(path, lineno + 1, e.to_string()))?;
        out.push(c);
    }
    ComparisonSet::new(n, out)
}

pub fn read_comparisons(path: &Path, n: usize) -> Result<ComparisonSet> {
    parse_comparisons(&read(path)?, n, path)
}

/// Triplets are written in the 3-field form.
pub fn format_comparisons(set: &ComparisonSet) -> String {
    let mut s = String::with_capacity(set.len() * 12);
    for c in set {
        if c.is_triplet() {
            let _ = writeln!(s, "{},{},{}", c.i, c.j, c.k);
        } else {
            let _ = writeln!(s, "{},{},{},{}", c.i, c.j, c.l, c.k);
        }
    }
    s
}

pub fn write_comparisons(path: &Path, set: &ComparisonSet) -> Result<()> {
    write_atomic(path, &format_comparisons(set))
}

pub fn parse_embedding(text: &str, path: &Path) -> Result<EmbeddingMatrix> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, lineno + 1, e.to_string()))?;
        rows.push(row);
    }
    EmbeddingMatrix::from_rows(&rows)
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    parse_embedding(&read(path)?, path)
}

/// Shortest round-trip representation of every entry.
pub fn format_embedding(x: &EmbeddingMatrix) -> String {
    let mut s = String::new();
    for i in 0..x.n() {
        for (c, v) in x.row(i).iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn write_embedding(path: &Path, x: &EmbeddingMatrix) -> Result<()> {
    write_atomic(path, &format_embedding(x))
}

/// Reads `index,label` lines into a dense label vector of length `n`.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<String>> {
    let text = read(path)?;
    let mut labels: Vec<Option<String>> = vec![None; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (idx, label) = line.split_once(',').ok_or_else(|| parse_err(path, lineno + 1, "expected index,label"))?;
        let idx: usize = idx.trim().parse().map_err(|e: std::num::ParseIntError| parse_err(path, lineno + 1, e.to_string()))?;
        let slot = labels
            .get_mut(idx)
            .ok_or_else(|| Error::usage(format!("label index {idx} out of range for {n} embedding rows")))?;
        *slot = Some(label.trim().to_string());
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::usage(format!("no label for object {i}"))))
        .collect()
}

pub const TRACE_HEADER: &str = "epoch,eta,grad_norm,train_error,test_error,grad_evals,elapsed_ms";

pub fn format_traces(traces: &[EpochTrace]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for t in traces {
        let test = t.test_error.map(|v| format!("{v:?}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{},{},{:.3}",
            t.epoch, t.step_size, t.full_gradient_norm, t.train_error, test, t.grad_evals, t.elapsed_ms
        );
    }
    s
}

/// Step-size diagnostics per epoch: SBB step, signed plain BB step, reuse flag.
pub fn format_step_diagnostics(traces: &[EpochTrace]) -> String {
    let mut s = String::from("epoch,eta,bb_step,diff_sq_norm,curvature,step_reused\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for t in traces {
        let _ = writeln!(
            s,
            "{},{:?},{},{},{},{}",
            t.epoch,
            t.step_size,
            opt(t.bb_step),
            opt(t.diff_sq_norm),
            opt(t.curvature),
            t.step_reused
        );
    }
    s
}
