//! Subject filtering, judgment metrics, grouped correlations, and the
//! learning curves of a machine discriminator with significance tests.

mod discriminator;
mod stats;
mod subjects;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::Explanation;
use crate::protocol::{ExperimentEvent, ExperimentState, ProtocolError};
use crate::text_model::{EvalMetrics, TextModelError};

pub use discriminator::{discriminator_experiment, DiscriminatorConfig, LearningCurve};
pub use stats::{
    average_ranks, binomial_interval, bonferroni, kruskal_wallis, kruskal_wallis_groups,
    pearson_correlation, quantile_sorted, TestResult,
};
pub use subjects::{
    filter_subjects, grouped_correlations, subject_accuracy_histogram, turing_metrics,
    FilterOutcome, GroupCorrelation, GroupPoint, GroupedCorrelations, HistogramBin,
    JudgmentRow, JudgmentTable, SubjectAccuracy, SubjectHistogram, TURING_LABELS,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {found}")]
    TooFewValues { needed: usize, found: usize },
    #[error("correlation undefined: a series has zero variance")]
    UndefinedCorrelation,
    #[error("all values are identical; the rank test is undefined")]
    DegenerateTest,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("judgment table is empty")]
    EmptyTable,
    #[error("only {usable} usable {grouping} groups, need 2")]
    TooFewGroups { grouping: String, usable: usize },
    #[error("discriminator experiment infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] TextModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub min_accuracy: f64,
    pub discriminator: DiscriminatorConfig,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            min_accuracy: 0.6,
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

/// Everything computed from one event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub filter: FilterOutcome,
    pub trials: usize,
    pub metrics: EvalMetrics<f64>,
    pub histogram: SubjectHistogram,
    /// `Err` text when a grouping had fewer than two usable groups.
    pub correlations: Result<GroupedCorrelations, String>,
    pub learning_curves: Result<Vec<LearningCurve<f64>>, String>,
    pub options: AnalysisOptions,
}

/// The stimuli of every answered trial, labeled with their true origin.
pub fn stimulus_explanations(table: &JudgmentTable) -> Vec<Explanation> {
    table
        .rows
        .iter()
        .map(|r| Explanation {
            review_id: r.review_id.clone(),
            origin: r.true_origin,
            words: r.stimulus_words.clone(),
            predicted_label: crate::corpus::Sentiment::Positive,
        })
        .collect()
}

/// Replays the log and runs the full analysis. Correlations and learning
/// curves are kept as error strings when their own preconditions fail, so
/// the rest of the report is still produced.
pub fn run_analysis(events: &[ExperimentEvent], options: &AnalysisOptions) -> Result<AnalysisReport, AnalysisError> {
    let state = ExperimentState::replay(events)?;
    let filter = filter_subjects(&state, options.min_accuracy);
    let table = JudgmentTable::from_state(&state, &filter.retained);
    let metrics = turing_metrics(&table)?;
    let histogram = subject_accuracy_histogram(&table)?;
    let correlations = grouped_correlations(&table).map_err(|e| e.to_string());
    let human_accuracies = histogram.accuracies();
    let learning_curves =
        discriminator_experiment(&stimulus_explanations(&table), &human_accuracies, &options.discriminator)
            .map_err(|e| e.to_string());
    Ok(AnalysisReport {
        filter,
        trials: table.rows.len(),
        metrics,
        histogram,
        correlations,
        learning_curves,
        options: options.clone(),
    })
}
