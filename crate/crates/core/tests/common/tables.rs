//! Parser for `fixtures/reported_tables.txt`: printed per-class reports
//! with two-decimal metrics.

use std::path::{Path, PathBuf};

use emojinet::metrics::RowValues;

#[derive(Clone, Debug)]
pub struct PrintedRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl PrintedRow {
    pub fn values(&self) -> RowValues {
        RowValues {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            support: self.support,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrintedTable {
    pub model: String,
    pub rows: Vec<PrintedRow>,
    pub accuracy: f64,
    pub macro_avg: [f64; 3],
    pub weighted_avg: [f64; 3],
}

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/reported_tables.txt")
}

fn three(parts: &[&str]) -> [f64; 3] {
    [parts[1].parse().unwrap(), parts[2].parse().unwrap(), parts[3].parse().unwrap()]
}

pub fn load() -> Vec<PrintedTable> {
    let text = std::fs::read_to_string(fixture_path()).expect("reported tables fixture");
    let mut tables: Vec<PrintedTable> = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            tables.push(PrintedTable {
                model: name.to_string(),
                rows: Vec::new(),
                accuracy: f64::NAN,
                macro_avg: [f64::NAN; 3],
                weighted_avg: [f64::NAN; 3],
            });
            continue;
        }
        let t = tables.last_mut().expect("row before table header");
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "accuracy" => t.accuracy = parts[1].parse().unwrap(),
            "macro" => t.macro_avg = three(&parts),
            "weighted" => t.weighted_avg = three(&parts),
            label => t.rows.push(PrintedRow {
                label: label.to_string(),
                precision: parts[1].parse().unwrap(),
                recall: parts[2].parse().unwrap(),
                f1: parts[3].parse().unwrap(),
                support: parts[4].parse().unwrap(),
            }),
        }
    }
    tables
}

/// Range of `2pr/(p+r)` when the true precision and recall lie within
/// half a unit of the last printed digit (`0.005`) of `p` and `r`. F1 is
/// increasing in both arguments, so the corners give the bounds.
pub fn f1_interval(p: f64, r: f64) -> (f64, f64) {
    let f1 = emojinet::metrics::f1_score;
    let lo = f1((p - 0.005).max(0.0), (r - 0.005).max(0.0));
    let hi = f1(p + 0.005, r + 0.005);
    (lo, hi)
}
