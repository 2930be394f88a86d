//! Machine-readable report bundle: metric tables and plot-ready series.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisReport, GroupCorrelation, TURING_LABELS};
use crate::text_model::{ReportRow, REPORT_COLUMNS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    /// CSV tables and series plus `report.json`.
    #[default]
    Csv,
    /// Only `report.json`.
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Judgment metrics in report order: ML model, human, accuracy, weighted avg.
pub fn metrics_rows(report: &AnalysisReport) -> Vec<ReportRow> {
    report.metrics.rows(&TURING_LABELS)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn points_rows(group: &GroupCorrelation) -> Vec<Vec<String>> {
    group
        .points
        .iter()
        .map(|p| vec![p.group.clone(), p.annotation_accuracy.to_string(), p.turing_accuracy.to_string()])
        .collect()
}

/// Rendered files as (name, bytes), in a fixed order.
pub fn render(report: &AnalysisReport, format: ReportFormat) -> Result<Vec<(String, Vec<u8>)>, ReportError> {
    let mut files = Vec::new();
    if format == ReportFormat::Csv {
        let mut header = vec![""];
        header.extend(REPORT_COLUMNS);
        let rows = metrics_rows(report)
            .into_iter()
            .map(|r| {
                vec![
                    r.name,
                    r.precision.to_string(),
                    r.recall.to_string(),
                    r.f1.to_string(),
                    r.support.map(|s| s.to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        files.push(("metrics.csv".to_string(), csv_bytes(&header, rows)?));

        let rows = report
            .histogram
            .bins
            .iter()
            .map(|b| vec![b.lower.to_string(), b.upper.to_string(), b.count.to_string()])
            .collect();
        files.push(("histogram.csv".to_string(), csv_bytes(&["lower", "upper", "count"], rows)?));

        let rows = report
            .histogram
            .subjects
            .iter()
            .map(|s| vec![s.participant_id.clone(), s.correct.to_string(), s.total.to_string(), s.accuracy.to_string()])
            .collect();
        files.push((
            "subject_accuracy.csv".to_string(),
            csv_bytes(&["participant_id", "correct", "total", "accuracy"], rows)?,
        ));

        let header = ["grouping", "r", "groups", "excluded", "note"];
        let rows = match &report.correlations {
            Ok(c) => [("subject", &c.by_subject), ("review", &c.by_review)]
                .into_iter()
                .map(|(name, g)| {
                    vec![
                        name.to_string(),
                        opt(g.r),
                        g.points.len().to_string(),
                        g.excluded.len().to_string(),
                        if g.r.is_none() { "zero variance".into() } else { String::new() },
                    ]
                })
                .collect(),
            Err(e) => vec![vec!["all".into(), String::new(), String::new(), String::new(), e.clone()]],
        };
        files.push(("correlations.csv".to_string(), csv_bytes(&header, rows)?));
        if let Ok(c) = &report.correlations {
            let header = ["group", "annotation_accuracy", "turing_accuracy"];
            files.push(("subject_points.csv".to_string(), csv_bytes(&header, points_rows(&c.by_subject))?));
            files.push(("review_points.csv".to_string(), csv_bytes(&header, points_rows(&c.by_review))?));
        }

        let header = ["size", "models", "q10", "q50", "q90", "statistic", "p_value", "significant", "marker"];
        let rows = match &report.learning_curves {
            Ok(curves) => curves
                .iter()
                .map(|c| {
                    vec![
                        c.size.to_string(),
                        c.accuracies.len().to_string(),
                        c.q10.to_string(),
                        c.q50.to_string(),
                        c.q90.to_string(),
                        c.statistic.to_string(),
                        c.p_value.to_string(),
                        c.significant.to_string(),
                        if c.significant { "*".into() } else { String::new() },
                    ]
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        files.push(("learning_curve.csv".to_string(), csv_bytes(&header, rows)?));
    }
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    files.push(("report.json".to_string(), json));
    Ok(files)
}

pub fn write_report(report: &AnalysisReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for (name, bytes) in render(report, format)? {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<AnalysisReport, ReportError> {
    let bytes = fs::read(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}
