use super::*;
use crate::corpus::Split;

fn fixture(n: usize) -> ExperimentMaterials {
    let reviews: Vec<Review> = (0..n)
        .map(|i| Review {
            id: format!("rev{i:02}"),
            text: format!("plot{i} acting{i} music{i} ending{i} cast{i}"),
            label: Sentiment::from_positive(i % 2 == 0),
            split: Split::Test,
        })
        .collect();
    let machine = reviews
        .iter()
        .enumerate()
        .map(|(i, r)| Explanation {
            review_id: r.id.clone(),
            origin: Origin::Machine,
            words: vec![format!("plot{i}"), format!("acting{i}"), format!("music{i}")],
            predicted_label: if i % 5 == 0 { r.label.flipped() } else { r.label },
        })
        .collect();
    ExperimentMaterials::new(reviews, machine).unwrap()
}

fn service(seed: u64) -> ExperimentService<MemoryStore> {
    ExperimentService::new(
        ProtocolConfig::with_seed(seed),
        fixture(12),
        MemoryStore::default(),
        Box::new(LogicalClock::default()),
    )
    .unwrap()
}

fn words_of(review: &Review, pick: [usize; 3]) -> Vec<String> {
    let tokens = tokenize_for_test(&review.text);
    pick.iter().map(|&i| tokens[i].clone()).collect()
}

fn tokenize_for_test(text: &str) -> Vec<String> {
    crate::text_model::tokenize(text)
}

fn passed_session(s: &mut ExperimentService<MemoryStore>, id: &str) -> String {
    let token = s.open_session(id).unwrap().token;
    assert_eq!(s.submit_bot_check(&token, 0).unwrap(), BotStatus::Passed);
    token
}

fn annotate_all(s: &mut ExperimentService<MemoryStore>, token: &str, correct: bool) -> Vec<String> {
    let mut seen = Vec::new();
    while let AnnotationTask::Review(r) = s.next_annotation_task(token).unwrap() {
        let label = if correct { r.label } else { r.label.flipped() };
        s.record_annotation(token, &r.id, label, words_of(&r, [0, 3, 4])).unwrap();
        seen.push(r.id);
    }
    seen
}

#[test]
fn sessions_are_idempotent() {
    let mut s = service(1);
    let a = s.open_session("w1").unwrap();
    assert_eq!(a.bot_check, BotStatus::Pending);
    assert_eq!(s.store().events.len(), 1);
    let b = s.open_session("w1").unwrap();
    assert_eq!(a, b);
    assert_eq!(s.store().events.len(), 1);
    assert!(s.open_session(" ").is_err());
}

#[test]
fn storage_failure_leaves_no_state() {
    let mut s = service(1);
    s.store_mut().unavailable = true;
    let err = s.open_session("w1").unwrap_err();
    assert!(err.is_retriable());
    assert!(s.state().participants.is_empty());
    assert_eq!(s.state().next_seq(), 0);
    s.store_mut().unavailable = false;
    s.open_session("w1").unwrap();
    assert_eq!(s.store().events[0].seq, 0);
}

#[test]
fn bot_check_gates_the_experiments() {
    let mut s = service(1);
    let ok = s.open_session("good").unwrap().token;
    assert!(matches!(s.next_annotation_task(&ok), Err(ProtocolError::BotCheckNotPassed)));
    assert_eq!(s.submit_bot_check(&ok, 0).unwrap(), BotStatus::Passed);
    assert!(matches!(s.submit_bot_check(&ok, 0), Err(ProtocolError::AlreadyAnswered)));

    let bad = s.open_session("bot").unwrap().token;
    assert_eq!(s.submit_bot_check(&bad, 2).unwrap(), BotStatus::Failed);
    assert!(matches!(s.next_annotation_task(&bad), Err(ProtocolError::BotCheckNotPassed)));
    assert!(matches!(s.next_judgment_trial(&bad), Err(ProtocolError::BotCheckNotPassed)));
    assert!(matches!(s.submit_bot_check(&bad, 0), Err(ProtocolError::AlreadyAnswered)));

    let other = s.open_session("x").unwrap().token;
    assert!(matches!(s.submit_bot_check(&other, 3), Err(ProtocolError::InvalidAnswerIndex(3))));
    assert!(matches!(s.submit_bot_check("nope", 0), Err(ProtocolError::UnknownSession)));
}

#[test]
fn five_distinct_stable_annotation_tasks() {
    let mut s = service(2);
    let token = passed_session(&mut s, "w1");
    let first = s.next_annotation_task(&token).unwrap();
    assert_eq!(first, s.next_annotation_task(&token).unwrap());
    let seen = annotate_all(&mut s, &token, true);
    assert_eq!(seen.len(), 5);
    let distinct: std::collections::BTreeSet<_> = seen.iter().collect();
    assert_eq!(distinct.len(), 5);
    assert_eq!(s.next_annotation_task(&token).unwrap(), AnnotationTask::Done);
}

#[test]
fn annotation_validation() {
    let mut s = service(3);
    let token = passed_session(&mut s, "w1");
    let AnnotationTask::Review(r) = s.next_annotation_task(&token).unwrap() else { panic!() };
    let two = words_of(&r, [0, 1, 2])[..2].to_vec();
    assert!(matches!(s.record_annotation(&token, &r.id, r.label, two), Err(ProtocolError::Validation(_))));
    let mut bogus = words_of(&r, [0, 1, 2]);
    bogus[2] = "zebra".into();
    match s.record_annotation(&token, &r.id, r.label, bogus) {
        Err(ProtocolError::Validation(msg)) => assert!(msg.contains("zebra")),
        other => panic!("{other:?}"),
    }
    let other = s.materials().reviews().iter().find(|x| x.id != r.id).unwrap().clone();
    assert!(matches!(
        s.record_annotation(&token, &other.id, other.label, words_of(&other, [0, 1, 2])),
        Err(ProtocolError::UnassignedReview(_))
    ));
    let events_before = s.store().events.len();
    let rec = s.record_annotation(&token, &r.id, r.label, words_of(&r, [0, 1, 2])).unwrap();
    assert!(rec.correct);
    assert_eq!(s.store().events.len(), events_before + 1);
    assert_eq!(s.state().human_pool[&r.id], vec![rec.human_explanation()]);
}

#[test]
fn judgments_avoid_seen_reviews_and_respect_quota() {
    let mut s = service(4);
    let token = passed_session(&mut s, "w1");
    assert!(matches!(s.next_judgment_trial(&token), Err(ProtocolError::Exp1Incomplete)));
    let seen = annotate_all(&mut s, &token, true);
    let mut judged = Vec::new();
    while let JudgmentTask::Trial(view) = s.next_judgment_trial(&token).unwrap() {
        assert_eq!(JudgmentTask::Trial(view.clone()), s.next_judgment_trial(&token).unwrap());
        assert!(!seen.contains(&view.review_id));
        assert_eq!(view.highlighted_words.len(), 3);
        // No other participant annotated yet: every stimulus is the model's.
        let trial = s.record_judgment(&token, &view.review_id, Origin::Machine).unwrap();
        assert!(trial.correct);
        assert_eq!(trial.stimulus.origin, Origin::Machine);
        assert_eq!(trial.shown_prediction, s.materials().machine_explanation(&view.review_id).unwrap().predicted_label);
        let events = s.store().events.len();
        assert!(s.record_judgment(&token, &view.review_id, Origin::Human).is_err());
        assert_eq!(s.store().events.len(), events);
        judged.push(view.review_id);
    }
    assert_eq!(judged.len(), 5);
    assert_eq!(s.next_judgment_trial(&token).unwrap(), JudgmentTask::Done);
}

#[test]
fn human_stimuli_come_from_correct_annotations_only() {
    let mut s = service(5);
    for i in 0..8 {
        let t = passed_session(&mut s, &format!("w{i}"));
        annotate_all(&mut s, &t, i % 2 == 0);
    }
    let mut human_trials = 0;
    for i in 0..8 {
        let t = s.token_of(&format!("w{i}")).unwrap().to_string();
        while let JudgmentTask::Trial(view) = s.next_judgment_trial(&t).unwrap() {
            let trial = s.record_judgment(&t, &view.review_id, Origin::Human).unwrap();
            if trial.stimulus.origin == Origin::Human {
                human_trials += 1;
                let source = s.state().participants.values().flat_map(|p| &p.annotations).find(|a| {
                    a.review_id == trial.review_id && a.marked_words == trial.stimulus.words && a.correct
                });
                assert!(source.is_some());
                assert_eq!(trial.shown_prediction, source.unwrap().chosen_label);
                assert!(trial.correct);
            }
        }
    }
    assert!(human_trials > 0);
}

#[test]
fn replay_reconstructs_state() {
    let mut s = service(6);
    let summary = simulate_participants(&mut s, 20, &SimulatedAnnotator::chance_guesser(), 9).unwrap();
    assert_eq!(summary.completed_sessions, 20);
    let rebuilt = ExperimentState::replay(&s.store().events).unwrap();
    assert_eq!(&rebuilt, s.state());

    let resumed = ExperimentService::resume(
        ProtocolConfig::with_seed(6),
        fixture(12),
        &s.store().events,
        MemoryStore::default(),
        Box::new(LogicalClock::default()),
    )
    .unwrap();
    assert_eq!(resumed.state(), s.state());
}

#[test]
fn replay_rejects_broken_logs() {
    let mut s = service(7);
    simulate_participants(&mut s, 2, &SimulatedAnnotator::perfect(), 1).unwrap();
    let mut events = s.store().events.clone();
    events.swap(1, 2);
    assert!(matches!(ExperimentState::replay(&events), Err(ProtocolError::Replay(_))));

    let mut events = s.store().events.clone();
    let judgment = events.iter().position(|e| matches!(e.payload, EventPayload::Judgment(_))).unwrap();
    let dup = ExperimentEvent { seq: 10_000, ..events[judgment].clone() };
    events.push(dup);
    assert!(ExperimentState::replay(&events).is_err());
}

#[test]
fn simulation_is_deterministic() {
    let run = || {
        let mut s = service(8);
        simulate_participants(&mut s, 10, &SimulatedAnnotator::chance_guesser(), 42).unwrap();
        serde_json::to_string(&s.store().events).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn perfect_annotators_are_always_correct() {
    let mut s = service(9);
    let summary = simulate_participants(&mut s, 6, &SimulatedAnnotator::perfect(), 2).unwrap();
    assert_eq!(summary.annotations, 30);
    assert_eq!(summary.correct_annotations, 30);
    assert!(s.state().participants.values().all(|p| p.annotation_accuracy() == Some(1.0)));
}

#[test]
fn bot_failures_stop_the_session() {
    let mut s = service(10);
    let annotator = SimulatedAnnotator { bot_pass_probability: 0.0, ..SimulatedAnnotator::chance_guesser() };
    let summary = simulate_participants(&mut s, 3, &annotator, 2).unwrap();
    assert_eq!(summary.bot_failures, 3);
    assert_eq!(summary.judgments, 0);
    assert!(s.state().participants.values().all(|p| p.judgments.is_empty()));
}

#[test]
fn setup_is_validated() {
    let small = fixture(9);
    assert!(ExperimentService::new(ProtocolConfig::default(), small, MemoryStore::default(), Box::new(LogicalClock::default())).is_err());
    let reviews = fixture(12).reviews().to_vec();
    assert!(ExperimentMaterials::new(reviews.clone(), Vec::new()).is_err());
    let bad = vec![Explanation {
        review_id: reviews[0].id.clone(),
        origin: Origin::Machine,
        words: vec!["nope".into(), "plot0".into(), "cast0".into()],
        predicted_label: Sentiment::Positive,
    }];
    assert!(ExperimentMaterials::new(reviews, bad).is_err());
}

#[test]
fn file_log_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ExperimentService::new(
        ProtocolConfig::with_seed(11),
        fixture(12),
        FileEventLog::open(dir.path()).unwrap(),
        Box::new(LogicalClock::default()),
    )
    .unwrap();
    simulate_participants(&mut s, 4, &SimulatedAnnotator::chance_guesser(), 3).unwrap();
    let events = read_event_log(dir.path()).unwrap();
    assert_eq!(ExperimentState::replay(&events).unwrap(), *s.state());
    assert!(events.windows(2).all(|w| w[0].seq < w[1].seq));

    std::fs::write(dir.path().join(EVENT_LOG_FILE), "{\"schema\":2,\"seq\":0,\"timestamp_ms\":0,\"payload\":{\"type\":\"bot_check\",\"participant_id\":\"a\",\"answer_index\":0,\"status\":\"passed\"}}\n").unwrap();
    assert!(matches!(read_event_log(dir.path()), Err(StorageError::Corrupt { .. })));
}
