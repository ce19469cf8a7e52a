//! Plot-ready CSV tables, JSON sidecars and JSON-lines logs.
//!
//! Every CSV starts with a header row; reals are written with 17 significant
//! digits so reruns compare byte for byte.

use crate::poisson::KernelTrace;
use crate::radiation::RadiationTrace;
use crate::sojourn::BranchSet;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Fixed 17-significant-digit formatting.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// In-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Stable digest of the CSV text.
    pub fn digest(&self) -> String {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.to_csv().hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn reals(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| fmt_real(*x)).collect()
}

/// Branch table: `z, y_target, dir, s, sigma, eta, jacobian, k, nondegenerate, residual`.
pub fn branch_table(sets: &[BranchSet]) -> Table {
    let (nz, ny, nd) = sets
        .iter()
        .find_map(|s| s.branches.first().map(|b| (s.z.len(), s.y_target.len(), b.dir.len())))
        .unwrap_or((0, 0, 0));
    let ne = sets
        .iter()
        .find_map(|s| s.branches.first().map(|b| b.limit.eta.len()))
        .unwrap_or(0);
    let mut cols = indexed("z", nz);
    cols.extend(indexed("y_target", ny));
    cols.extend(indexed("dir", nd));
    cols.push("s".into());
    cols.push("sigma".into());
    cols.extend(indexed("eta", ne));
    cols.extend(["jacobian", "jacobian_err", "k", "nondegenerate", "residual"].map(String::from));
    let mut t = Table::new(&cols);
    for set in sets {
        for b in &set.branches {
            let mut row = reals(&set.z);
            row.extend(reals(&set.y_target));
            row.extend(reals(&b.dir));
            row.push(fmt_real(b.limit.s));
            row.push(fmt_real(b.limit.sigma));
            row.extend(reals(&b.limit.eta));
            row.push(fmt_real(b.jacobian));
            row.push(fmt_real(b.jacobian_err));
            row.push(b.conj_count.to_string());
            row.push(b.nondegenerate.to_string());
            row.push(fmt_real(b.newton_residual));
            t.push(row);
        }
    }
    t
}

/// Trace table: `lambda, re, im, abs, unwrapped_phase`.
pub fn kernel_trace_table(trace: &KernelTrace) -> Table {
    let mut t = Table::new(&["lambda", "re", "im", "abs", "unwrapped_phase"]);
    let phase = trace.unwrapped_phase();
    for (k, v) in trace.values.iter().enumerate() {
        t.push(vec![
            fmt_real(trace.grid.at(k)),
            fmt_real(v.re),
            fmt_real(v.im),
            fmt_real(v.norm()),
            fmt_real(phase[k]),
        ]);
    }
    t
}

/// Radiation field table: `s, value`.
pub fn radiation_table(trace: &RadiationTrace) -> Table {
    let mut t = Table::new(&["s", "value"]);
    for (s, v) in trace.s.iter().zip(&trace.values) {
        t.push(vec![fmt_real(*s), fmt_real(*v)]);
    }
    t
}

/// Writes `name.csv` and its `name.meta.json` sidecar into `dir`.
pub fn write_table<M: Serialize>(dir: &Path, name: &str, table: &Table, meta: &M) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    fs::write(&path, table.to_csv())?;
    let sidecar = serde_json::json!({
        "file": format!("{name}.csv"),
        "columns": table.columns,
        "rows": table.rows.len(),
        "digest": table.digest(),
        "meta": meta,
    });
    fs::write(
        dir.join(format!("{name}.meta.json")),
        serde_json::to_string_pretty(&sidecar).map_err(std::io::Error::other)?,
    )?;
    Ok(path)
}

/// Append-only JSON-lines log, buffered and flushed by a single writer.
#[derive(Debug, Default)]
pub struct JsonLog {
    lines: String,
}

impl JsonLog {
    pub fn record<T: Serialize>(&mut self, value: &T) {
        let line = serde_json::to_string(value).expect("log records serialize");
        let _ = writeln!(self.lines, "{line}");
    }

    pub fn len(&self) -> usize {
        self.lines.lines().count()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.lines.as_bytes())
    }
}
