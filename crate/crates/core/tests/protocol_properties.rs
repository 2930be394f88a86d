use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use proptest::prelude::*;
use ttt_core::explain::Origin;
use ttt_core::protocol::{
    simulate_participants, BotStatus, EventPayload, ExperimentMaterials, ExperimentService, ExperimentState,
    JudgingStrategy, LogicalClock, MemoryStore, ProtocolConfig, SimulatedAnnotator, WordMarking,
};
use ttt_core::synth::{SynthConfig, SyntheticExperiment};
use ttt_core::text_model::tokenize;

fn materials() -> ExperimentMaterials {
    static EXPERIMENT: OnceLock<SyntheticExperiment> = OnceLock::new();
    EXPERIMENT
        .get_or_init(|| SyntheticExperiment::build(SynthConfig::default(), 1).unwrap())
        .materials()
}

fn run(seed: u64, n: usize, annotator: &SimulatedAnnotator) -> ExperimentService<MemoryStore> {
    let mut service = ExperimentService::new(
        ProtocolConfig::with_seed(seed),
        materials(),
        MemoryStore::default(),
        Box::new(LogicalClock::default()),
    )
    .unwrap();
    simulate_participants(&mut service, n, annotator, seed).unwrap();
    service
}

fn annotator() -> impl Strategy<Value = SimulatedAnnotator> {
    (
        0.0f64..1.0,
        0.0f64..1.0,
        prop::sample::select(vec![WordMarking::Random, WordMarking::MachineLike]),
        prop::sample::select(vec![JudgingStrategy::Chance, JudgingStrategy::AlwaysHuman, JudgingStrategy::AlwaysMachine]),
        0.0f64..=1.0,
    )
        .prop_map(|(a, b, marking, judging, bot)| SimulatedAnnotator {
            label_accuracy: (a.min(b), a.max(b)),
            marking,
            judging,
            bot_pass_probability: bot,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn protocol_invariants_hold(seed in any::<u64>(), n in 1usize..12, annotator in annotator()) {
        let service = run(seed, n, &annotator);
        let state = service.state();
        let config = service.config();
        let events = &service.store().events;

        let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
        prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));

        for p in state.participants.values() {
            prop_assert!(p.annotations.len() <= config.annotations_per_participant);
            prop_assert!(p.judgments.len() <= config.judgments_per_participant);
            let exp1: HashSet<&str> = p.annotations.iter().map(|a| a.review_id.as_str()).collect();
            prop_assert_eq!(exp1.len(), p.annotations.len());
            let exp2: Vec<&str> = p.judged_reviews().collect();
            prop_assert_eq!(exp2.iter().collect::<HashSet<_>>().len(), exp2.len());
            prop_assert!(exp2.iter().all(|r| !exp1.contains(r)));
            if p.bot_check != BotStatus::Passed {
                prop_assert!(p.annotations.is_empty() && p.judgments.is_empty());
            }
            for a in &p.annotations {
                let review = service.materials().review(&a.review_id).unwrap();
                prop_assert_eq!(a.correct, a.chosen_label == review.label);
                let tokens: HashSet<String> = tokenize(&review.text).into_iter().collect();
                prop_assert_eq!(a.marked_words.iter().collect::<BTreeSet<_>>().len(), 3);
                prop_assert!(a.marked_words.iter().all(|w| tokens.contains(w)));
            }
        }

        let correct_human: Vec<(String, Vec<String>)> = state
            .participants
            .values()
            .flat_map(|p| &p.annotations)
            .filter(|a| a.correct)
            .map(|a| (a.review_id.clone(), a.marked_words.clone()))
            .collect();
        for event in events {
            if let EventPayload::Judgment(j) = &event.payload {
                prop_assert_eq!(j.correct, j.judged_origin == j.stimulus.origin);
                if j.stimulus.origin == Origin::Human {
                    let key = (j.review_id.clone(), j.stimulus.words.clone());
                    prop_assert!(correct_human.contains(&key));
                } else {
                    let machine = service.materials().machine_explanation(&j.review_id).unwrap();
                    prop_assert_eq!(&j.stimulus.words, &machine.words);
                    prop_assert_eq!(j.shown_prediction, machine.predicted_label);
                }
            }
        }

        prop_assert_eq!(&ExperimentState::replay(events).unwrap(), state);
    }

    #[test]
    fn same_seed_same_log(seed in any::<u64>(), n in 1usize..6) {
        let annotator = SimulatedAnnotator::chance_guesser();
        let a = serde_json::to_string(&run(seed, n, &annotator).store().events).unwrap();
        let b = serde_json::to_string(&run(seed, n, &annotator).store().events).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn chance_cohort_completes_every_session() {
    let service = run(3, 145, &SimulatedAnnotator::chance_guesser());
    let state = service.state();
    assert_eq!(state.participants.len(), 145);
    let judgments: usize = state.participants.values().map(|p| p.judgments.len()).sum();
    assert!(judgments <= 725);
    assert!(state.participants.values().all(|p| p.annotations.len() == 5 && p.judgments.len() == 5));
}

#[test]
fn perfect_annotators_are_always_right() {
    let service = run(4, 20, &SimulatedAnnotator::perfect());
    assert!(service
        .state()
        .participants
        .values()
        .flat_map(|p| &p.annotations)
        .all(|a| a.correct));
}
