use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{pearson_correlation, AnalysisError};
use crate::explain::Origin;
use crate::protocol::{AnnotationRecord, BotStatus, ExperimentState};
use crate::text_model::EvalMetrics;

/// Row labels of the judgment report, machine (class `false`) first.
pub const TURING_LABELS: [&str; 2] = ["ML model", "human"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub min_accuracy: f64,
    pub before: usize,
    pub after: usize,
    pub retained: BTreeSet<String>,
    pub dropped: BTreeSet<String>,
}

/// Keeps participants who passed the bot check and whose experiment 1
/// accuracy is at least `min_accuracy`. Participants without any
/// annotation count as dropped.
pub fn filter_subjects(state: &ExperimentState, min_accuracy: f64) -> FilterOutcome {
    let mut retained = BTreeSet::new();
    let mut dropped = BTreeSet::new();
    for p in state.participants.values().filter(|p| p.bot_check == BotStatus::Passed) {
        let keep = p.annotations.iter().filter(|a| a.correct).count() as f64
            >= min_accuracy * p.annotations.len() as f64 - 1e-12
            && !p.annotations.is_empty();
        if keep {
            retained.insert(p.participant_id.clone());
        } else {
            dropped.insert(p.participant_id.clone());
        }
    }
    FilterOutcome {
        min_accuracy,
        before: retained.len() + dropped.len(),
        after: retained.len(),
        retained,
        dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRow {
    pub participant_id: String,
    pub review_id: String,
    pub true_origin: Origin,
    pub judged_origin: Origin,
    pub participant_annotation_accuracy: f64,
    pub stimulus_words: Vec<String>,
}

impl JudgmentRow {
    pub fn correct(&self) -> bool {
        self.true_origin == self.judged_origin
    }
}

/// Answered trials of retained participants, plus their annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgmentTable {
    pub rows: Vec<JudgmentRow>,
    pub annotations: Vec<AnnotationRecord>,
}

impl JudgmentTable {
    pub fn from_state(state: &ExperimentState, retained: &BTreeSet<String>) -> Self {
        let mut table = Self::default();
        for p in state.participants.values().filter(|p| retained.contains(&p.participant_id)) {
            let accuracy = p.annotation_accuracy().unwrap_or(0.0);
            table.annotations.extend(p.annotations.iter().cloned());
            table.rows.extend(p.judgments.iter().map(|j| JudgmentRow {
                participant_id: p.participant_id.clone(),
                review_id: j.review_id.clone(),
                true_origin: j.stimulus.origin,
                judged_origin: j.judged_origin,
                participant_annotation_accuracy: accuracy,
                stimulus_words: j.stimulus.words.clone(),
            }));
        }
        table
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Precision/recall/F1 of the origin judgments, human being the positive
/// class.
pub fn turing_metrics(table: &JudgmentTable) -> Result<EvalMetrics<f64>, AnalysisError> {
    if table.is_empty() {
        return Err(AnalysisError::EmptyTable);
    }
    let truth: Vec<bool> = table.rows.iter().map(|r| r.true_origin == Origin::Human).collect();
    let predicted: Vec<bool> = table.rows.iter().map(|r| r.judged_origin == Origin::Human).collect();
    Ok(EvalMetrics::from_predictions(TURING_LABELS, &truth, &predicted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectAccuracy {
    pub participant_id: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectHistogram {
    pub subjects: Vec<SubjectAccuracy>,
    /// Ten bins of width 0.1; the last one is closed and holds 1.0.
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    /// Mean weighted by trial count, i.e. the aggregate accuracy.
    pub weighted_mean: f64,
}

impl SubjectHistogram {
    pub fn accuracies(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.accuracy).collect()
    }
}

pub fn subject_accuracy_histogram(table: &JudgmentTable) -> Result<SubjectHistogram, AnalysisError> {
    if table.is_empty() {
        return Err(AnalysisError::EmptyTable);
    }
    let mut tallies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for row in &table.rows {
        let t = tallies.entry(&row.participant_id).or_default();
        t.0 += row.correct() as usize;
        t.1 += 1;
    }
    let mut bins: Vec<HistogramBin> = (0..10)
        .map(|i| HistogramBin {
            lower: i as f64 / 10.0,
            upper: (i + 1) as f64 / 10.0,
            count: 0,
        })
        .collect();
    let subjects: Vec<SubjectAccuracy> = tallies
        .into_iter()
        .map(|(id, (correct, total))| {
            // integer binning avoids 0.6 * 10 = 5.999... style drift
            bins[((correct * 10) / total).min(9)].count += 1;
            SubjectAccuracy {
                participant_id: id.to_string(),
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            }
        })
        .collect();
    let mean = subjects.iter().map(|s| s.accuracy).sum::<f64>() / subjects.len() as f64;
    let trials: usize = subjects.iter().map(|s| s.total).sum();
    let weighted_mean = subjects.iter().map(|s| s.accuracy * s.total as f64).sum::<f64>() / trials as f64;
    Ok(SubjectHistogram {
        subjects,
        bins,
        mean,
        weighted_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub group: String,
    pub annotation_accuracy: f64,
    pub turing_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCorrelation {
    /// `None` when one of the two series has zero variance.
    pub r: Option<f64>,
    pub points: Vec<GroupPoint>,
    /// Groups lacking one of the two accuracies.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedCorrelations {
    pub by_subject: GroupCorrelation,
    pub by_review: GroupCorrelation,
}

fn correlate(
    name: &str,
    annotation: BTreeMap<String, (usize, usize)>,
    turing: BTreeMap<String, (usize, usize)>,
) -> Result<GroupCorrelation, AnalysisError> {
    let groups: BTreeSet<&String> = annotation.keys().chain(turing.keys()).collect();
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for g in groups {
        match (annotation.get(g), turing.get(g)) {
            (Some(&(ac, an)), Some(&(tc, tn))) if an > 0 && tn > 0 => points.push(GroupPoint {
                group: g.clone(),
                annotation_accuracy: ac as f64 / an as f64,
                turing_accuracy: tc as f64 / tn as f64,
            }),
            _ => excluded.push(g.clone()),
        }
    }
    if points.len() < 2 {
        return Err(AnalysisError::TooFewGroups {
            grouping: name.to_string(),
            usable: points.len(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.annotation_accuracy).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.turing_accuracy).collect();
    let r = match pearson_correlation(&xs, &ys) {
        Ok(r) => Some(r),
        Err(AnalysisError::UndefinedCorrelation) => None,
        Err(e) => return Err(e),
    };
    Ok(GroupCorrelation { r, points, excluded })
}

/// Correlation of annotation accuracy with judgment accuracy, grouped by
/// participant and by review. The review grouping only counts trials that
/// showed a human explanation for that review.
pub fn grouped_correlations(table: &JudgmentTable) -> Result<GroupedCorrelations, AnalysisError> {
    let mut subject_annotation: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut review_annotation: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for a in &table.annotations {
        for (map, key) in [(&mut subject_annotation, &a.participant_id), (&mut review_annotation, &a.review_id)] {
            let t = map.entry(key.clone()).or_default();
            t.0 += a.correct as usize;
            t.1 += 1;
        }
    }
    let mut subject_turing: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut review_turing: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for row in &table.rows {
        let t = subject_turing.entry(row.participant_id.clone()).or_default();
        t.0 += row.correct() as usize;
        t.1 += 1;
        if row.true_origin == Origin::Human {
            let t = review_turing.entry(row.review_id.clone()).or_default();
            t.0 += row.correct() as usize;
            t.1 += 1;
        }
    }
    Ok(GroupedCorrelations {
        by_subject: correlate("subject", subject_annotation, subject_turing)?,
        by_review: correlate("review", review_annotation, review_turing)?,
    })
}
