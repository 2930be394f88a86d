use std::fs;

use ttt_core::corpus::{
    load_corpus, save_corpus, select_experiment_subset, CorpusError, CorpusFormat, ExperimentSubset, Sentiment, Split,
};
use ttt_core::synth::{synthetic_corpus, SynthConfig};
use ttt_core::text_model::{grid_search, LinearModel, TrainConfig};

fn setup() -> (ttt_core::corpus::Corpus, LinearModel<f64>) {
    let corpus = synthetic_corpus(&SynthConfig {
        seed: 5,
        ..SynthConfig::default()
    });
    let model = grid_search::<f64>(&corpus.split(Split::Train), &TrainConfig::with_seed(5))
        .unwrap()
        .model;
    (corpus, model)
}

fn correct_count(subset: &ExperimentSubset, model: &LinearModel<f64>) -> usize {
    subset
        .reviews
        .iter()
        .filter(|r| model.predict_text(&r.text) == r.label)
        .count()
}

#[test]
fn subset_hits_exact_accuracy_and_is_seeded() {
    let (corpus, model) = setup();
    let a = select_experiment_subset(&corpus, &model, 0.8, 50, 9).unwrap();
    assert_eq!(a.len(), 50);
    assert_eq!(correct_count(&a, &model), 40);
    assert_eq!(a.accuracy(), 0.8);
    assert!(a.reviews.iter().all(|r| r.split == Split::Test));
    assert_eq!(a, select_experiment_subset(&corpus, &model, 0.8, 50, 9).unwrap());
    let b = select_experiment_subset(&corpus, &model, 0.8, 50, 10).unwrap();
    assert_ne!(a.review_ids, b.review_ids);
    assert_eq!(correct_count(&b, &model), 40);
}

#[test]
fn subset_edge_cases() {
    let (corpus, model) = setup();
    let one = select_experiment_subset(&corpus, &model, 1.0, 1, 1).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(correct_count(&one, &model), 1);

    let test_size = corpus.split(Split::Test).len();
    assert!(matches!(
        select_experiment_subset(&corpus, &model, 0.0, test_size, 1),
        Err(CorpusError::InfeasibleTarget(_))
    ));
    assert!(matches!(
        select_experiment_subset(&corpus, &model, 0.75, 50, 1),
        Err(CorpusError::NonIntegerCount(_))
    ));
    assert!(matches!(
        select_experiment_subset(&corpus, &model, 1.5, 50, 1),
        Err(CorpusError::InfeasibleTarget(_))
    ));
}

#[test]
fn subset_file_round_trip_and_validation() {
    let (corpus, model) = setup();
    let subset = select_experiment_subset(&corpus, &model, 0.8, 50, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("subset.json");
    subset.save(&path).unwrap();
    assert_eq!(ExperimentSubset::load(&path).unwrap(), subset);

    let mut broken = subset.clone();
    broken.review_ids.pop();
    broken.save(&path).unwrap();
    assert!(matches!(ExperimentSubset::load(&path), Err(CorpusError::Malformed { .. })));
}

#[test]
fn corpus_formats_round_trip() {
    let corpus = synthetic_corpus(&SynthConfig {
        n_train: 6,
        n_test: 4,
        seed: 2,
        ..SynthConfig::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let lines = dir.path().join("corpus.jsonl");
    save_corpus(&corpus, &lines).unwrap();
    assert_eq!(CorpusFormat::detect(&lines), CorpusFormat::RecordLines);
    assert_eq!(load_corpus(&lines, CorpusFormat::RecordLines).unwrap(), corpus);

    let root = dir.path().join("imdb");
    for review in corpus.reviews() {
        let split = match review.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let class = match review.label {
            Sentiment::Positive => "pos",
            Sentiment::Negative => "neg",
        };
        let folder = root.join(split).join(class);
        fs::create_dir_all(&folder).unwrap();
        fs::write(folder.join(format!("{}.txt", review.id)), &review.text).unwrap();
    }
    fs::create_dir_all(root.join("train/unsup")).unwrap();
    fs::write(root.join("train/unsup/0_0.txt"), "ignored").unwrap();
    assert_eq!(CorpusFormat::detect(&root), CorpusFormat::DirectoryPerClass);
    let loaded = load_corpus(&root, CorpusFormat::DirectoryPerClass).unwrap();
    assert_eq!(loaded.len(), corpus.len());
    assert_eq!(loaded.split(Split::Train).len(), 6);
    for review in corpus.reviews() {
        let split = if review.split == Split::Train { "train" } else { "test" };
        let class = if review.label.is_positive() { "pos" } else { "neg" };
        let got = loaded.get(&format!("{split}/{class}/{}", review.id)).unwrap();
        assert_eq!(got.text, review.text);
        assert_eq!(got.label, review.label);
    }

    assert!(matches!(
        load_corpus(&dir.path().join("missing"), CorpusFormat::RecordLines),
        Err(CorpusError::MissingPath(_))
    ));
}
