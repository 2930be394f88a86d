use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationTask, BotStatus, EventStore, ExperimentService, JudgmentTask, ProtocolError};
use crate::explain::Origin;
use crate::rng::rng_for;
use crate::text_model::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordMarking {
    /// Three distinct tokens of the review, uniformly.
    Random,
    /// The model's own explanation words, i.e. "human" explanations that
    /// are indistinguishable from machine ones.
    MachineLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgingStrategy {
    /// Fair coin per trial.
    Chance,
    AlwaysHuman,
    AlwaysMachine,
}

/// Behavior of a simulated participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAnnotator {
    /// Each participant draws a personal labeling accuracy uniformly from
    /// this range and labels every review correctly with that probability.
    pub label_accuracy: (f64, f64),
    pub marking: WordMarking,
    pub judging: JudgingStrategy,
    pub bot_pass_probability: f64,
}

impl SimulatedAnnotator {
    pub fn chance_guesser() -> Self {
        Self {
            label_accuracy: (0.4, 1.0),
            marking: WordMarking::Random,
            judging: JudgingStrategy::Chance,
            bot_pass_probability: 1.0,
        }
    }

    pub fn perfect() -> Self {
        Self {
            label_accuracy: (1.0, 1.0),
            ..Self::chance_guesser()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub participants: usize,
    pub bot_failures: usize,
    pub completed_sessions: usize,
    pub annotations: usize,
    pub correct_annotations: usize,
    pub judgments: usize,
}

/// Runs `n` simulated participants (`sim-0000`, `sim-0001`, ...) one after
/// another through the public service calls.
pub fn simulate_participants<S: EventStore>(
    service: &mut ExperimentService<S>,
    n: usize,
    annotator: &SimulatedAnnotator,
    seed: u64,
) -> Result<SimulationSummary, ProtocolError> {
    let mut summary = SimulationSummary::default();
    let correct_option = service.config().bot_check.correct_index;
    for i in 0..n {
        let participant_id = format!("sim-{i:04}");
        let mut rng = rng_for(seed, &["simulated-participant", &participant_id]);
        let session = service.open_session(&participant_id)?;
        summary.participants += 1;

        let answer = if rng.random_bool(annotator.bot_pass_probability) {
            correct_option
        } else {
            (correct_option + rng.random_range(1..3)) % 3
        };
        if service.submit_bot_check(&session.token, answer)? == BotStatus::Failed {
            summary.bot_failures += 1;
            continue;
        }

        let (lo, hi) = annotator.label_accuracy;
        let accuracy = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        while let AnnotationTask::Review(review) = service.next_annotation_task(&session.token)? {
            let label = if rng.random_bool(accuracy) {
                review.label
            } else {
                review.label.flipped()
            };
            let words = match annotator.marking {
                WordMarking::MachineLike => service
                    .materials()
                    .machine_explanation(&review.id)
                    .expect("every subset review has one")
                    .words
                    .clone(),
                WordMarking::Random => {
                    let distinct: Vec<String> =
                        tokenize(&review.text).into_iter().collect::<BTreeSet<_>>().into_iter().collect();
                    distinct.choose_multiple(&mut rng, 3).cloned().collect()
                }
            };
            let record = service.record_annotation(&session.token, &review.id, label, words)?;
            summary.annotations += 1;
            summary.correct_annotations += record.correct as usize;
        }

        while let JudgmentTask::Trial(trial) = service.next_judgment_trial(&session.token)? {
            let judged = match annotator.judging {
                JudgingStrategy::Chance if rng.random_bool(0.5) => Origin::Human,
                JudgingStrategy::Chance => Origin::Machine,
                JudgingStrategy::AlwaysHuman => Origin::Human,
                JudgingStrategy::AlwaysMachine => Origin::Machine,
            };
            service.record_judgment(&session.token, &trial.review_id, judged)?;
            summary.judgments += 1;
        }
        summary.completed_sessions += 1;
    }
    Ok(summary)
}
