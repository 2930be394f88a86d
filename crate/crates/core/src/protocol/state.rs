use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::events::{EventPayload, ExperimentEvent};
use super::{AnnotationRecord, BotStatus, JudgmentTrial, ProtocolError, TrialAssignment};
use crate::explain::{Explanation, Origin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantState {
    pub participant_id: String,
    pub token: String,
    pub bot_check: BotStatus,
    pub created_at_ms: u64,
    pub exp1_reviews: Vec<String>,
    pub annotations: Vec<AnnotationRecord>,
    pub pending_trial: Option<TrialAssignment>,
    pub judgments: Vec<JudgmentTrial>,
}

impl ParticipantState {
    pub fn annotation_accuracy(&self) -> Option<f64> {
        if self.annotations.is_empty() {
            return None;
        }
        let correct = self.annotations.iter().filter(|a| a.correct).count();
        Some(correct as f64 / self.annotations.len() as f64)
    }

    pub fn judged_reviews(&self) -> impl Iterator<Item = &str> {
        self.judgments.iter().map(|j| j.review_id.as_str())
    }
}

/// Everything the service knows, rebuilt purely from the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub participants: BTreeMap<String, ParticipantState>,
    pub tokens: BTreeMap<String, String>,
    /// Human explanations from correct annotations, per review, in log order.
    pub human_pool: BTreeMap<String, Vec<Explanation>>,
    pub last_seq: Option<u64>,
}

impl ExperimentState {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a ExperimentEvent>) -> Result<Self, ProtocolError> {
        let mut state = Self::default();
        for event in events {
            state.apply(event)?;
        }
        Ok(state)
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq.map_or(0, |s| s + 1)
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantState> {
        self.participants.get(id)
    }

    fn participant_mut(&mut self, id: &str, seq: u64) -> Result<&mut ParticipantState, ProtocolError> {
        self.participants
            .get_mut(id)
            .ok_or_else(|| ProtocolError::Replay(format!("event {seq} references unknown participant {id}")))
    }

    /// Applies one event, checking sequence order and the protocol
    /// invariants the event relies on.
    pub fn apply(&mut self, event: &ExperimentEvent) -> Result<(), ProtocolError> {
        let seq = event.seq;
        if self.last_seq.is_some_and(|last| seq <= last) {
            return Err(ProtocolError::Replay(format!(
                "sequence {seq} does not follow {}",
                self.last_seq.unwrap_or_default()
            )));
        }
        let broken = |what: &str| ProtocolError::Replay(format!("event {seq}: {what}"));
        match &event.payload {
            EventPayload::SessionOpened {
                participant_id,
                token,
                exp1_reviews,
            } => {
                if self.participants.contains_key(participant_id) {
                    return Err(broken("session opened twice"));
                }
                self.tokens.insert(token.clone(), participant_id.clone());
                self.participants.insert(
                    participant_id.clone(),
                    ParticipantState {
                        participant_id: participant_id.clone(),
                        token: token.clone(),
                        bot_check: BotStatus::Pending,
                        created_at_ms: event.timestamp_ms,
                        exp1_reviews: exp1_reviews.clone(),
                        annotations: Vec::new(),
                        pending_trial: None,
                        judgments: Vec::new(),
                    },
                );
            }
            EventPayload::BotCheck {
                participant_id,
                status,
                ..
            } => {
                let p = self.participant_mut(participant_id, seq)?;
                if p.bot_check != BotStatus::Pending || *status == BotStatus::Pending {
                    return Err(broken("bot check answered twice"));
                }
                p.bot_check = *status;
            }
            EventPayload::Annotation(record) => {
                let p = self.participant_mut(&record.participant_id, seq)?;
                if p.bot_check != BotStatus::Passed {
                    return Err(broken("annotation before passing the bot check"));
                }
                if p.exp1_reviews.get(p.annotations.len()) != Some(&record.review_id) {
                    return Err(broken("annotation for an unassigned review"));
                }
                p.annotations.push(record.clone());
                if record.correct {
                    self.human_pool
                        .entry(record.review_id.clone())
                        .or_default()
                        .push(record.human_explanation());
                }
            }
            EventPayload::TrialAssigned(assignment) => {
                let p = self.participant_mut(&assignment.participant_id, seq)?;
                if p.bot_check != BotStatus::Passed {
                    return Err(broken("trial before passing the bot check"));
                }
                if p.pending_trial.is_some() {
                    return Err(broken("trial assigned while another is pending"));
                }
                if p.exp1_reviews.contains(&assignment.review_id)
                    || p.judged_reviews().any(|r| r == assignment.review_id)
                {
                    return Err(broken("trial review already seen by the participant"));
                }
                p.pending_trial = Some(assignment.clone());
                if assignment.stimulus.origin == Origin::Human {
                    let pooled = self
                        .human_pool
                        .get(&assignment.review_id)
                        .is_some_and(|pool| pool.contains(&assignment.stimulus));
                    if !pooled {
                        return Err(broken("human stimulus not from a correct annotation"));
                    }
                }
            }
            EventPayload::Judgment(trial) => {
                let p = self.participant_mut(&trial.participant_id, seq)?;
                match &p.pending_trial {
                    Some(a) if a.review_id == trial.review_id && a.stimulus == trial.stimulus => {}
                    _ => return Err(broken("judgment without a matching pending trial")),
                }
                p.pending_trial = None;
                p.judgments.push(trial.clone());
            }
        }
        self.last_seq = Some(seq);
        Ok(())
    }
}
