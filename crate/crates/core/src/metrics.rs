//! Confusion matrices and per-class classification reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-wise argmax of `rows × classes` logits; ties go to the lowest id.
pub fn predict_labels<T: Copy + PartialOrd>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (c, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// `counts[t * k + p]` = number of examples with true label `t` predicted
/// as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Data(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.add(t, p)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::Data(format!(
                "label pair ({truth}, {predicted}) outside {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, class)).sum()
    }

    /// CSV with a header row of predicted labels and one row per true label.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for t in 0..self.classes {
            out.push_str(&names[t]);
            for p in 0..self.classes {
                write!(out, ",{}", self.get(t, p)).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Nothing was predicted as this class, so precision was set to 0.
    pub precision_undefined: bool,
    /// The class has no examples, so recall was set to 0.
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub rows: Vec<ClassRow>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class metrics plus accuracy and macro/weighted averages.
pub fn report(confusion: &ConfusionMatrix, names: &[String]) -> Result<ClassificationReport> {
    let k = confusion.classes();
    if names.len() != k {
        return Err(Error::Data(format!("{} label names for {k} classes", names.len())));
    }
    let total = confusion.total();
    if total == 0 {
        return Err(Error::Data("confusion matrix is empty".into()));
    }
    let rows: Vec<ClassRow> = (0..k)
        .map(|c| {
            let tp = confusion.get(c, c);
            let (precision, precision_undefined) = ratio(tp, confusion.predicted(c));
            let (recall, recall_undefined) = ratio(tp, confusion.support(c));
            ClassRow {
                label: names[c].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: confusion.support(c),
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let values: Vec<RowValues> = rows.iter().map(RowValues::from).collect();
    let (macro_avg, weighted_avg, _) = aggregate_from_rows(&values);
    Ok(ClassificationReport {
        accuracy: confusion.trace() as f64 / total as f64,
        rows,
        macro_avg,
        weighted_avg,
        total,
    })
}

/// One printed row of a classification table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowValues {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl From<&ClassRow> for RowValues {
    fn from(r: &ClassRow) -> Self {
        Self {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            support: r.support,
        }
    }
}

/// Macro (unweighted) and support-weighted means of per-class values, and
/// the total support. With zero total support the weighted mean is zero.
pub fn aggregate_from_rows(rows: &[RowValues]) -> (Averages, Averages, u64) {
    let total: u64 = rows.iter().map(|r| r.support).sum();
    let n = rows.len().max(1) as f64;
    let macro_avg = Averages {
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
    };
    let w = |f: fn(&RowValues) -> f64| {
        if total == 0 {
            0.0
        } else {
            rows.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total as f64
        }
    };
    let weighted_avg = Averages {
        precision: w(|r| r.precision),
        recall: w(|r| r.recall),
        f1: w(|r| r.f1),
    };
    (macro_avg, weighted_avg, total)
}

impl ClassificationReport {
    /// Human-readable table: three two-decimal metric columns and support,
    /// then the accuracy, macro and weighted rows.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .chain(["Weighted Avg".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let mut line = |label: &str, cells: [String; 4]| {
            let pad = width - label.chars().count();
            writeln!(
                out,
                "{label}{:pad$}  {:>9}  {:>9}  {:>9}  {:>9}",
                "", cells[0], cells[1], cells[2], cells[3]
            )
            .expect("writing to a String");
        };
        let f = |v: f64| format!("{v:.2}");
        line("Label", ["Precision".into(), "Recall".into(), "F1-Score".into(), "Support".into()]);
        for r in &self.rows {
            line(&r.label, [f(r.precision), f(r.recall), f(r.f1), r.support.to_string()]);
        }
        line("", [String::new(), String::new(), String::new(), String::new()]);
        line("Accuracy", [String::new(), String::new(), f(self.accuracy), self.total.to_string()]);
        for (name, a) in [("Macro Avg", self.macro_avg), ("Weighted Avg", self.weighted_avg)] {
            line(name, [f(a.precision), f(a.recall), f(a.f1), self.total.to_string()]);
        }
        out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
