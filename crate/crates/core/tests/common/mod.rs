#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

use vacflow_core::config::parse_config_str;
use vacflow_core::experiment::{run, RunOutcome};

/// A parsed CSV file: header names and rows of raw cells.
pub struct Csv {
    pub columns: HashMap<String, usize>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Csv {
        let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text.lines();
        let header = lines.next().expect("header line");
        let columns = header.split(',').enumerate().map(|(i, s)| (s.to_string(), i)).collect();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Csv { columns, rows }
    }

    pub fn col(&self, name: &str) -> Vec<f64> {
        let i = *self.columns.get(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].parse::<f64>().unwrap_or(f64::NAN)).collect()
    }
}

/// Parses `config` and runs it in `dir`.
pub fn run_text(config: &str, dir: &Path) -> RunOutcome {
    let cfg = parse_config_str(config).unwrap_or_else(|e| panic!("bad config:\n{e}"));
    run(&cfg, dir).expect("run")
}

/// Relative drifts of the `m` and `P_*` columns, max over samples.
pub fn drifts(csv: &Csv, dim: usize) -> (f64, f64) {
    let m = csv.col("m");
    let p: Vec<Vec<f64>> = (1..=dim).map(|a| csv.col(&format!("P_{a}"))).collect();
    let norm = |i: usize| p.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt();
    let dev = |i: usize| p.iter().map(|c| (c[i] - c[0]).powi(2)).sum::<f64>().sqrt();
    let dm = (0..m.len()).map(|i| (m[i] - m[0]).abs() / m[0].max(1e-300)).fold(0.0, f64::max);
    let dp = (0..m.len()).map(|i| dev(i) / norm(0).max(1e-300)).fold(0.0, f64::max);
    (dm, dp)
}
