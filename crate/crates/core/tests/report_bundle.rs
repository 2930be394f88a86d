use std::collections::BTreeSet;
use std::fs;

use serde::Deserialize;
use ttt_core::analysis::{
    run_analysis, subject_accuracy_histogram, turing_metrics, AnalysisError, AnalysisOptions, DiscriminatorConfig,
    JudgmentRow, JudgmentTable, TURING_LABELS,
};
use ttt_core::explain::Origin;
use ttt_core::protocol::{
    simulate_participants, ExperimentEvent, ExperimentService, LogicalClock, MemoryStore, ProtocolConfig,
    SimulatedAnnotator,
};
use ttt_core::report::{metrics_rows, render, write_report, ReportFormat};
use ttt_core::synth::{SynthConfig, SyntheticExperiment};
use ttt_core::text_model::render_rows;

#[derive(Deserialize)]
struct Counts {
    machine_judged_machine: usize,
    machine_judged_human: usize,
    human_judged_human: usize,
    human_judged_machine: usize,
}

fn table_from_counts() -> JudgmentTable {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/judgment_counts.json");
    let c: Counts = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    let mut rows = Vec::new();
    let cells = [
        (Origin::Machine, Origin::Machine, c.machine_judged_machine),
        (Origin::Machine, Origin::Human, c.machine_judged_human),
        (Origin::Human, Origin::Human, c.human_judged_human),
        (Origin::Human, Origin::Machine, c.human_judged_machine),
    ];
    for (truth, judged, count) in cells {
        for i in 0..count {
            rows.push(JudgmentRow {
                participant_id: format!("p{:03}", rows.len() % 134),
                review_id: format!("r{i:03}"),
                true_origin: truth,
                judged_origin: judged,
                participant_annotation_accuracy: 0.8,
                stimulus_words: vec!["aa".into(), "bb".into(), "cc".into()],
            });
        }
    }
    JudgmentTable {
        rows,
        annotations: Vec::new(),
    }
}

#[test]
fn judgment_table_layout_and_hand_values() {
    let metrics = turing_metrics(&table_from_counts()).unwrap();
    let rows = metrics.rows(&TURING_LABELS);
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["ML model", "human", "accuracy", "weighted avg"]);

    let (pm, rm, fm) = (154.0 / 313.0, 154.0 / 311.0, 308.0 / 624.0);
    let (ph, rh, fh) = (200.0 / 357.0, 200.0 / 359.0, 400.0 / 716.0);
    let acc = 354.0 / 670.0;
    let expected = [
        (pm, rm, fm, Some(311)),
        (ph, rh, fh, Some(359)),
        (acc, acc, acc, None),
        (
            (311.0 * pm + 359.0 * ph) / 670.0,
            (311.0 * rm + 359.0 * rh) / 670.0,
            (311.0 * fm + 359.0 * fh) / 670.0,
            Some(670),
        ),
    ];
    for (row, (p, r, f, s)) in rows.iter().zip(expected) {
        assert_eq!(row.precision, p, "{} precision", row.name);
        assert_eq!(row.recall, r, "{} recall", row.name);
        assert!((row.f1 - f).abs() <= 1e-15, "{} f1 {} vs {}", row.name, row.f1, f);
        assert_eq!(row.support, s);
    }

    let rendered = render_rows(&rows);
    let cells: Vec<Vec<&str>> = rendered.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(cells[0], ["ML", "model", "0.49", "0.50", "0.49", "311"]);
    assert_eq!(cells[1], ["human", "0.56", "0.56", "0.56", "359"]);
    assert_eq!(cells[2], ["accuracy", "0.53", "0.53", "0.53"]);
    assert_eq!(cells[3], ["weighted", "avg", "0.53", "0.53", "0.53", "670"]);
    let header: Vec<&str> = rendered.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["precision", "recall", "f1-score", "support"]);
}

#[test]
fn weighted_subject_mean_equals_aggregate_accuracy() {
    let table = table_from_counts();
    let histogram = subject_accuracy_histogram(&table).unwrap();
    let metrics = turing_metrics(&table).unwrap();
    assert!((histogram.weighted_mean - metrics.accuracy).abs() <= 1e-12);
    assert_eq!(histogram.bins.iter().map(|b| b.count).sum::<usize>(), histogram.subjects.len());
}

fn simulated_log(seed: u64, n: usize) -> Vec<ExperimentEvent> {
    let experiment = SyntheticExperiment::build(SynthConfig::default(), seed).unwrap();
    let mut service = ExperimentService::new(
        ProtocolConfig::with_seed(seed),
        experiment.materials(),
        MemoryStore::default(),
        Box::new(LogicalClock::default()),
    )
    .unwrap();
    simulate_participants(&mut service, n, &SimulatedAnnotator::chance_guesser(), seed).unwrap();
    service.store().events.clone()
}

fn options(seed: u64) -> AnalysisOptions {
    AnalysisOptions {
        discriminator: DiscriminatorConfig {
            sizes: vec![5, 10, 20],
            models_per_size: Some(15),
            seed,
            ..DiscriminatorConfig::default()
        },
        ..AnalysisOptions::default()
    }
}

#[test]
fn bundle_is_byte_deterministic() {
    let events = simulated_log(2, 40);
    let report = run_analysis(&events, &options(2)).unwrap();
    let curves = report.learning_curves.as_ref().unwrap();
    for c in curves {
        assert!(c.q10 <= c.q50 && c.q50 <= c.q90);
        assert!(c.accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
        assert_eq!(c.accuracies.len(), 15);
    }

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = write_report(&report, a.path(), ReportFormat::Csv).unwrap();
    let again = run_analysis(&events, &options(2)).unwrap();
    write_report(&again, b.path(), ReportFormat::Csv).unwrap();
    let names: BTreeSet<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for required in ["metrics.csv", "histogram.csv", "correlations.csv", "learning_curve.csv", "report.json"] {
        assert!(names.contains(required), "{required} missing");
    }
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }

    let metrics = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], ",precision,recall,f1-score,support");
    let first: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(first, ["ML model", "human", "accuracy", "weighted avg"]);
    assert!(lines[3].ends_with(','));
    assert_eq!(metrics_rows(&report).len(), 4);

    let curve = fs::read_to_string(a.path().join("learning_curve.csv")).unwrap();
    assert!(curve.starts_with("size,models,q10,q50,q90,statistic,p_value,significant,marker"));
    assert_eq!(curve.lines().count(), 4);

    let json_only = render(&report, ReportFormat::Json).unwrap();
    assert_eq!(json_only.len(), 1);
    assert_eq!(json_only[0].1, fs::read(a.path().join("report.json")).unwrap());
}

#[test]
fn empty_judgment_table_is_an_error() {
    let events = simulated_log(2, 3);
    let strict = AnalysisOptions {
        min_accuracy: 1.01,
        ..options(2)
    };
    assert!(matches!(run_analysis(&events, &strict), Err(AnalysisError::EmptyTable)));
    assert!(matches!(turing_metrics(&JudgmentTable::default()), Err(AnalysisError::EmptyTable)));
}
