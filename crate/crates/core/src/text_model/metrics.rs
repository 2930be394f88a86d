use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassMetrics<T> {
    pub label: String,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: usize,
    pub predicted: usize,
    /// No instance was predicted for this class; precision is reported as 0.
    pub precision_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Averages<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

/// Binary classification report: per-class scores, accuracy and
/// support-weighted averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalMetrics<T> {
    /// Class `false` first, then class `true`.
    pub classes: Vec<ClassMetrics<T>>,
    pub accuracy: T,
    pub weighted: Averages<T>,
    pub total_support: usize,
}

/// One rendered line of a report table; `None` cells are left blank.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: Option<usize>,
}

pub const REPORT_COLUMNS: [&str; 4] = ["precision", "recall", "f1-score", "support"];

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::of_usize(num) / T::of_usize(den)
    }
}

impl<T: Scalar> EvalMetrics<T> {
    /// Computes the report from paired ground truth and predictions.
    ///
    /// Panics if the slices differ in length or are empty.
    pub fn from_predictions(labels: [&str; 2], truth: &[bool], predicted: &[bool]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "truth/prediction length mismatch");
        assert!(!truth.is_empty(), "metrics need at least one example");
        let mut confusion = [[0usize; 2]; 2];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t as usize][p as usize] += 1;
        }
        let classes: Vec<ClassMetrics<T>> = (0..2)
            .map(|c| {
                let tp = confusion[c][c];
                let support = confusion[c][0] + confusion[c][1];
                let predicted = confusion[0][c] + confusion[1][c];
                let precision: T = ratio(tp, predicted);
                let recall: T = ratio(tp, support);
                let f1 = if precision + recall > T::zero() {
                    T::of(2.0) * precision * recall / (precision + recall)
                } else {
                    T::zero()
                };
                ClassMetrics {
                    label: labels[c].to_string(),
                    precision,
                    recall,
                    f1,
                    support,
                    predicted,
                    precision_undefined: predicted == 0,
                }
            })
            .collect();
        let total = truth.len();
        let accuracy = ratio(confusion[0][0] + confusion[1][1], total);
        let weigh = |f: fn(&ClassMetrics<T>) -> T| {
            classes
                .iter()
                .map(|c| f(c) * T::of_usize(c.support))
                .sum::<T>()
                / T::of_usize(total)
        };
        let weighted = Averages {
            precision: weigh(|c| c.precision),
            recall: weigh(|c| c.recall),
            f1: weigh(|c| c.f1),
        };
        Self {
            classes,
            accuracy,
            weighted,
            total_support: total,
        }
    }

    pub fn class(&self, label: &str) -> Option<&ClassMetrics<T>> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Rows in report order: each class as given by `order` (labels), then
    /// `accuracy` and `weighted avg`. The accuracy row repeats the accuracy
    /// across the score columns and leaves support blank.
    pub fn rows(&self, order: &[&str]) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = order
            .iter()
            .filter_map(|label| self.class(label))
            .map(|c| ReportRow {
                name: c.label.clone(),
                precision: c.precision.as_f64(),
                recall: c.recall.as_f64(),
                f1: c.f1.as_f64(),
                support: Some(c.support),
            })
            .collect();
        let acc = self.accuracy.as_f64();
        rows.push(ReportRow {
            name: "accuracy".into(),
            precision: acc,
            recall: acc,
            f1: acc,
            support: None,
        });
        rows.push(ReportRow {
            name: "weighted avg".into(),
            precision: self.weighted.precision.as_f64(),
            recall: self.weighted.recall.as_f64(),
            f1: self.weighted.f1.as_f64(),
            support: Some(self.total_support),
        });
        rows
    }

    /// Plain-text table with two decimals, classes in stored order.
    pub fn render_table(&self) -> String {
        let order: Vec<&str> = self.classes.iter().map(|c| c.label.as_str()).collect();
        render_rows(&self.rows(&order))
    }
}

pub fn render_rows(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(12);
    let mut out = format!("{:width$}", "");
    for column in REPORT_COLUMNS {
        let _ = write!(out, " {column:>10}");
    }
    out.push('\n');
    for row in rows {
        let support = row.support.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:width$} {:>10.2} {:>10.2} {:>10.2} {:>10}",
            row.name, row.precision, row.recall, row.f1, support
        );
    }
    out
}
