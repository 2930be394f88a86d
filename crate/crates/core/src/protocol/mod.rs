//! The two-phase experiment as an event-sourced service.
//!
//! Phase one: after a bot check, each participant labels five reviews and
//! marks the three words that drove the decision. Phase two: the participant
//! sees five other reviews, each with a predicted label and three
//! highlighted words that came either from another participant (only from
//! correct annotations) or from the model, and judges which.
//!
//! Every state change is an [`ExperimentEvent`] appended to an
//! [`EventStore`] before it is applied, so replaying the log rebuilds the
//! exact service state.

mod events;
mod simulate;
mod state;

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ExperimentSubset, Review, Sentiment};
use crate::explain::{check_marked_words, Explanation, Origin};
use crate::rng::rng_for;
use crate::derive_seed;

pub use events::{
    read_event_log, Clock, EventPayload, EventStore, ExperimentEvent, FileEventLog, LogicalClock,
    MemoryStore, StorageError, SystemClock, EVENT_LOG_FILE, EVENT_SCHEMA_VERSION,
};
pub use simulate::{simulate_participants, JudgingStrategy, SimulatedAnnotator, SimulationSummary, WordMarking};
pub use state::{ExperimentState, ParticipantState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BotStatus {
    Pending,
    Passed,
    Failed,
}

/// Experiment 1 record: one label and three marked words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub participant_id: String,
    pub review_id: String,
    pub chosen_label: Sentiment,
    pub marked_words: Vec<String>,
    pub correct: bool,
}

impl AnnotationRecord {
    pub fn human_explanation(&self) -> Explanation {
        Explanation {
            review_id: self.review_id.clone(),
            origin: Origin::Human,
            words: self.marked_words.clone(),
            predicted_label: self.chosen_label,
        }
    }
}

/// A stimulus handed to a participant and not yet judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialAssignment {
    pub participant_id: String,
    pub review_id: String,
    pub stimulus: Explanation,
    pub shown_prediction: Sentiment,
}

/// Experiment 2 record: the participant's guess about who explained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentTrial {
    pub participant_id: String,
    pub review_id: String,
    pub stimulus: Explanation,
    pub shown_prediction: Sentiment,
    pub judged_origin: Origin,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotCheckConfig {
    pub question: String,
    pub options: [String; 3],
    pub correct_index: usize,
}

impl Default for BotCheckConfig {
    fn default() -> Self {
        Self {
            question: "What is this annotation task about?".into(),
            options: [
                "Rating the sentiment of movie reviews".into(),
                "Transcribing scanned receipts".into(),
                "Tagging objects in street photos".into(),
            ],
            correct_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub bot_check: BotCheckConfig,
    pub annotations_per_participant: usize,
    pub judgments_per_participant: usize,
    /// Chance of showing a human explanation when one is available.
    pub human_stimulus_probability: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            bot_check: BotCheckConfig::default(),
            annotations_per_participant: 5,
            judgments_per_participant: 5,
            human_stimulus_probability: 0.5,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown session token")]
    UnknownSession,
    #[error("bot check has not been passed")]
    BotCheckNotPassed,
    #[error("bot check was already answered")]
    AlreadyAnswered,
    #[error("answer index {0} is not one of the three options")]
    InvalidAnswerIndex(usize),
    #[error("invalid submission: {0}")]
    Validation(String),
    #[error("review {0} is not currently assigned to this participant")]
    UnassignedReview(String),
    #[error("experiment 1 is not finished")]
    Exp1Incomplete,
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("invalid experiment setup: {0}")]
    Setup(String),
    #[error("event log cannot be replayed: {0}")]
    Replay(String),
}

impl ProtocolError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ProtocolError::Storage(e) if e.is_retriable())
    }
}

/// Subset reviews and the model's explanation for each of them.
#[derive(Debug, Clone)]
pub struct ExperimentMaterials {
    reviews: Vec<Review>,
    by_id: BTreeMap<String, usize>,
    machine: BTreeMap<String, Explanation>,
}

impl ExperimentMaterials {
    pub fn new(reviews: Vec<Review>, machine_explanations: Vec<Explanation>) -> Result<Self, ProtocolError> {
        let by_id: BTreeMap<String, usize> =
            reviews.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        if by_id.len() != reviews.len() {
            return Err(ProtocolError::Setup("duplicate review id in subset".into()));
        }
        let mut machine = BTreeMap::new();
        for e in machine_explanations {
            let Some(&i) = by_id.get(&e.review_id) else {
                continue;
            };
            if e.origin != Origin::Machine {
                return Err(ProtocolError::Setup(format!("explanation for {} is not machine-made", e.review_id)));
            }
            e.validate(&reviews[i]).map_err(|err| ProtocolError::Setup(err.to_string()))?;
            machine.insert(e.review_id.clone(), e);
        }
        if let Some(r) = reviews.iter().find(|r| !machine.contains_key(&r.id)) {
            return Err(ProtocolError::Setup(format!("no machine explanation for review {}", r.id)));
        }
        Ok(Self { reviews, by_id, machine })
    }

    pub fn from_subset(subset: &ExperimentSubset, machine_explanations: Vec<Explanation>) -> Result<Self, ProtocolError> {
        let reviews = subset
            .review_ids
            .iter()
            .map(|id| {
                subset
                    .review(id)
                    .cloned()
                    .ok_or_else(|| ProtocolError::Setup(format!("subset lacks review {id}")))
            })
            .collect::<Result<_, _>>()?;
        Self::new(reviews, machine_explanations)
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn review(&self, id: &str) -> Option<&Review> {
        self.by_id.get(id).map(|&i| &self.reviews[i])
    }

    pub fn machine_explanation(&self, id: &str) -> Option<&Explanation> {
        self.machine.get(id)
    }
}

/// What a participant gets after opening a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub token: String,
    pub participant_id: String,
    pub bot_check: BotStatus,
    pub bot_check_question: String,
    pub options: [String; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnnotationTask {
    Review(Review),
    Done,
}

/// A trial as the participant sees it; the origin is withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub review_id: String,
    pub text: String,
    pub highlighted_words: Vec<String>,
    pub shown_prediction: Sentiment,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JudgmentTask {
    Trial(TrialView),
    Done,
}

pub struct ExperimentService<S> {
    config: ProtocolConfig,
    materials: ExperimentMaterials,
    state: ExperimentState,
    store: S,
    clock: Box<dyn Clock>,
}

impl<S: EventStore> ExperimentService<S> {
    pub fn new(config: ProtocolConfig, materials: ExperimentMaterials, store: S, clock: Box<dyn Clock>) -> Result<Self, ProtocolError> {
        let needed = config.annotations_per_participant + config.judgments_per_participant;
        if materials.reviews.len() < needed {
            return Err(ProtocolError::Setup(format!(
                "{} subset reviews cannot cover {needed} distinct tasks per participant",
                materials.reviews.len()
            )));
        }
        if config.bot_check.correct_index > 2 {
            return Err(ProtocolError::Setup("bot check correct index must be 0..=2".into()));
        }
        if !(0.0..=1.0).contains(&config.human_stimulus_probability) {
            return Err(ProtocolError::Setup("human stimulus probability outside [0, 1]".into()));
        }
        Ok(Self {
            config,
            materials,
            state: ExperimentState::default(),
            store,
            clock,
        })
    }

    /// Rebuilds a service from an existing log; new events go to `store`.
    pub fn resume(
        config: ProtocolConfig,
        materials: ExperimentMaterials,
        events: &[ExperimentEvent],
        store: S,
        clock: Box<dyn Clock>,
    ) -> Result<Self, ProtocolError> {
        let mut service = Self::new(config, materials, store, clock)?;
        service.state = ExperimentState::replay(events)?;
        Ok(service)
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn materials(&self) -> &ExperimentMaterials {
        &self.materials
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut S {
        &mut self.store
    }

    /// Persists first, then applies; a storage failure changes nothing.
    fn commit(&mut self, payload: EventPayload) -> Result<(), ProtocolError> {
        let event = ExperimentEvent {
            schema: EVENT_SCHEMA_VERSION,
            seq: self.state.next_seq(),
            timestamp_ms: self.clock.now_ms(),
            payload,
        };
        let mut next = self.state.clone();
        next.apply(&event)?;
        self.store.append(&event)?;
        self.state = next;
        Ok(())
    }

    fn participant(&self, token: &str) -> Result<&ParticipantState, ProtocolError> {
        self.state
            .tokens
            .get(token)
            .and_then(|id| self.state.participants.get(id))
            .ok_or(ProtocolError::UnknownSession)
    }

    fn passed(&self, token: &str) -> Result<&ParticipantState, ProtocolError> {
        let p = self.participant(token)?;
        if p.bot_check != BotStatus::Passed {
            return Err(ProtocolError::BotCheckNotPassed);
        }
        Ok(p)
    }

    fn session_info(&self, p: &ParticipantState) -> SessionInfo {
        SessionInfo {
            token: p.token.clone(),
            participant_id: p.participant_id.clone(),
            bot_check: p.bot_check,
            bot_check_question: self.config.bot_check.question.clone(),
            options: self.config.bot_check.options.clone(),
        }
    }

    /// Opens a session; repeated calls with the same id return the existing
    /// session without logging anything.
    pub fn open_session(&mut self, participant_id: &str) -> Result<SessionInfo, ProtocolError> {
        if participant_id.trim().is_empty() {
            return Err(ProtocolError::Validation("participant id is empty".into()));
        }
        if let Some(p) = self.state.participants.get(participant_id) {
            return Ok(self.session_info(p));
        }
        let token = format!(
            "{:016x}{:016x}",
            derive_seed(self.config.seed, &["token", participant_id]),
            derive_seed(self.config.seed, &["token-salt", participant_id])
        );
        let mut ids: Vec<&str> = self.materials.reviews.iter().map(|r| r.id.as_str()).collect();
        ids.shuffle(&mut rng_for(self.config.seed, &["exp1", participant_id]));
        let exp1_reviews = ids[..self.config.annotations_per_participant]
            .iter()
            .map(|s| s.to_string())
            .collect();
        self.commit(EventPayload::SessionOpened {
            participant_id: participant_id.to_string(),
            token: token.clone(),
            exp1_reviews,
        })?;
        let p = self.participant(&token)?;
        Ok(self.session_info(p))
    }

    pub fn submit_bot_check(&mut self, token: &str, answer_index: usize) -> Result<BotStatus, ProtocolError> {
        let p = self.participant(token)?;
        if p.bot_check != BotStatus::Pending {
            return Err(ProtocolError::AlreadyAnswered);
        }
        if answer_index > 2 {
            return Err(ProtocolError::InvalidAnswerIndex(answer_index));
        }
        let status = if answer_index == self.config.bot_check.correct_index {
            BotStatus::Passed
        } else {
            BotStatus::Failed
        };
        let participant_id = p.participant_id.clone();
        self.commit(EventPayload::BotCheck {
            participant_id,
            answer_index,
            status,
        })?;
        Ok(status)
    }

    /// The review to annotate next; the same one until it is answered.
    pub fn next_annotation_task(&self, token: &str) -> Result<AnnotationTask, ProtocolError> {
        let p = self.passed(token)?;
        Ok(match p.exp1_reviews.get(p.annotations.len()) {
            Some(id) => AnnotationTask::Review(self.materials.review(id).expect("assigned from subset").clone()),
            None => AnnotationTask::Done,
        })
    }

    pub fn record_annotation(
        &mut self,
        token: &str,
        review_id: &str,
        label: Sentiment,
        marked_words: Vec<String>,
    ) -> Result<AnnotationRecord, ProtocolError> {
        let p = self.passed(token)?;
        if p.exp1_reviews.get(p.annotations.len()).map(String::as_str) != Some(review_id) {
            return Err(ProtocolError::UnassignedReview(review_id.to_string()));
        }
        let review = self.materials.review(review_id).expect("assigned from subset");
        let marked_words: Vec<String> = marked_words.into_iter().map(|w| w.to_lowercase()).collect();
        check_marked_words(&marked_words, &review.text).map_err(ProtocolError::Validation)?;
        let record = AnnotationRecord {
            participant_id: p.participant_id.clone(),
            review_id: review_id.to_string(),
            chosen_label: label,
            marked_words,
            correct: label == review.label,
        };
        self.commit(EventPayload::Annotation(record.clone()))?;
        Ok(record)
    }

    fn view(&self, a: &TrialAssignment) -> TrialView {
        TrialView {
            review_id: a.review_id.clone(),
            text: self.materials.review(&a.review_id).expect("assigned from subset").text.clone(),
            highlighted_words: a.stimulus.words.clone(),
            shown_prediction: a.shown_prediction,
        }
    }

    /// Next origin-judgment trial. Reviews come from the subset minus the
    /// participant's experiment 1 reviews, without replacement. A fair coin
    /// picks a human stimulus when a correct human explanation exists for
    /// the review; otherwise the model's explanation is shown.
    pub fn next_judgment_trial(&mut self, token: &str) -> Result<JudgmentTask, ProtocolError> {
        let p = self.passed(token)?;
        if p.annotations.len() < self.config.annotations_per_participant {
            return Err(ProtocolError::Exp1Incomplete);
        }
        if let Some(a) = &p.pending_trial {
            return Ok(JudgmentTask::Trial(self.view(a)));
        }
        let trial_index = p.judgments.len();
        if trial_index >= self.config.judgments_per_participant {
            return Ok(JudgmentTask::Done);
        }
        let participant_id = p.participant_id.clone();
        let mut order: Vec<&str> = self
            .materials
            .reviews
            .iter()
            .map(|r| r.id.as_str())
            .filter(|id| !p.exp1_reviews.iter().any(|e| e == id))
            .collect();
        order.shuffle(&mut rng_for(self.config.seed, &["exp2", &participant_id]));
        let review_id = order[trial_index].to_string();

        let mut rng = rng_for(self.config.seed, &["exp2-stimulus", &participant_id, &trial_index.to_string()]);
        let wants_human = rng.random_bool(self.config.human_stimulus_probability);
        let human = self
            .state
            .human_pool
            .get(&review_id)
            .filter(|_| wants_human)
            .and_then(|pool| pool.choose(&mut rng));
        let stimulus = match human {
            Some(h) => h.clone(),
            None => self.materials.machine_explanation(&review_id).expect("checked at setup").clone(),
        };
        let assignment = TrialAssignment {
            participant_id,
            review_id,
            shown_prediction: stimulus.predicted_label,
            stimulus,
        };
        let view = self.view(&assignment);
        self.commit(EventPayload::TrialAssigned(assignment))?;
        Ok(JudgmentTask::Trial(view))
    }

    pub fn record_judgment(&mut self, token: &str, review_id: &str, judged_origin: Origin) -> Result<JudgmentTrial, ProtocolError> {
        let p = self.passed(token)?;
        let assignment = match &p.pending_trial {
            Some(a) if a.review_id == review_id => a,
            _ => return Err(ProtocolError::UnassignedReview(review_id.to_string())),
        };
        let trial = JudgmentTrial {
            participant_id: assignment.participant_id.clone(),
            review_id: assignment.review_id.clone(),
            stimulus: assignment.stimulus.clone(),
            shown_prediction: assignment.shown_prediction,
            judged_origin,
            correct: judged_origin == assignment.stimulus.origin,
        };
        self.commit(EventPayload::Judgment(trial.clone()))?;
        Ok(trial)
    }

    /// Token of an existing participant, e.g. for a retried request.
    pub fn token_of(&self, participant_id: &str) -> Option<&str> {
        self.state.participants.get(participant_id).map(|p| p.token.as_str())
    }
}

#[cfg(test)]
mod tests;
