use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};

/// A named CSV table with string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner()
            .map_err(|e| Error::io("<csv buffer>", e.into_error()))
    }
}

/// Deterministic float formatting: plain notation in a readable range,
/// scientific otherwise. Both round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Everything an experiment produces, before it touches the disk.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub tables: Vec<Table>,
    pub summary: serde_json::Value,
    /// Named seeds derived from the master seed.
    pub seeds: BTreeMap<String, u64>,
}

impl ExperimentResult {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Write all tables plus `result.json` and `timing.json` into `dir`.
///
/// Files are first written to a scratch directory inside `dir` and then
/// renamed into place, so a failure leaves no partial result files. Only
/// `timing.json` depends on wall time.
pub fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    result: &ExperimentResult,
    wall_time_secs: f64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scratch = tempfile::Builder::new()
        .prefix(".cred-partial")
        .tempdir_in(dir)
        .map_err(|e| Error::io(dir, e))?;

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for t in &result.tables {
        files.push((t.file_name(), t.to_csv()?));
    }
    let manifest = json!({
        "experiment": result.kind.as_str(),
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": config.seed,
        "trials": config.trials(),
        "config": config,
        "seeds": result.seeds,
        "summary": result.summary,
        "files": result.tables.iter().map(Table::file_name).collect::<Vec<_>>(),
    });
    files.push(("result.json".into(), serde_json::to_vec_pretty(&manifest)?));
    files.push((
        "timing.json".into(),
        serde_json::to_vec_pretty(&json!({ "wall_time_secs": wall_time_secs }))?,
    ));

    for (name, bytes) in &files {
        let path = scratch.path().join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, _) in &files {
        let from = scratch.path().join(name);
        let to = dir.join(name);
        std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
        written.push(to);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, -2.5, 1e-12, 3.3e20, 0.1 + 0.2, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1e-12), "1e-12");
        assert_eq!(fmt_f64(0.25), "0.25");
    }

    #[test]
    fn outputs_land_in_place() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str("experiment = \"sampling_viz\"").unwrap();
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let res = ExperimentResult {
            kind: cfg.experiment,
            tables: vec![t],
            summary: json!({}),
            seeds: BTreeMap::new(),
        };
        let files = write_outputs(dir.path(), &cfg, &res, 0.5).unwrap();
        assert_eq!(files.len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("demo.csv")).unwrap();
        assert_eq!(csv, "a,b\n1,\"x,y\"\n");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".cred"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
