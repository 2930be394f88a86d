use std::collections::HashSet;

use ttt_core::corpus::{Review, Split};
use ttt_core::explain::{
    machine_explanation, relevance_covariance, ExplainOptions, Origin, Ranking, RelevanceVector,
};
use ttt_core::synth::{synthetic_corpus, SynthConfig};
use ttt_core::text_model::{grid_search, tokenize, LinearModel, TrainConfig};

struct Fixture {
    reviews: Vec<Review>,
    model: LinearModel<f64>,
    relevance: RelevanceVector<f64>,
}

fn fixture() -> Fixture {
    let corpus = synthetic_corpus(&SynthConfig {
        n_train: 400,
        n_test: 500,
        seed: 17,
        ..SynthConfig::default()
    });
    let train = corpus.split(Split::Train);
    let model = grid_search::<f64>(&train, &TrainConfig::with_seed(17)).unwrap().model;
    let relevance = relevance_covariance(&model, &train).unwrap();
    let reviews: Vec<Review> = corpus.split(Split::Test).into_iter().cloned().collect();
    assert_eq!(reviews.len(), 500);
    Fixture {
        reviews,
        model,
        relevance,
    }
}

/// Scores every distinct known token, sorts the whole list and takes the
/// first three.
fn full_sort_oracle(f: &Fixture, review: &Review, ranking: Ranking) -> Vec<String> {
    let x = f.model.transform(&review.text);
    let positive = f.model.predict_proba(&x) >= 0.5;
    let mut seen = HashSet::new();
    let mut scored: Vec<(f64, usize, String)> = Vec::new();
    for (position, token) in tokenize(&review.text).into_iter().enumerate() {
        let Some(j) = f.model.features.vocabulary.index_of(&token) else {
            continue;
        };
        if !seen.insert(token.clone()) {
            continue;
        }
        let score = x.get(j) * f.relevance.values[j];
        let key = match ranking {
            Ranking::Signed if positive => score,
            Ranking::Signed => -score,
            Ranking::Absolute => score.abs(),
        };
        scored.push((key, position, token));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(3).map(|(_, _, t)| t).collect()
}

#[test]
fn matches_full_sort_oracle_on_every_review() {
    let f = fixture();
    for ranking in [Ranking::Signed, Ranking::Absolute] {
        let options = ExplainOptions { k: 3, ranking };
        let mut matched = 0;
        for review in &f.reviews {
            let e = machine_explanation(&f.model, &f.relevance, review, options).unwrap();
            assert_eq!(e.origin, Origin::Machine);
            assert_eq!(e.words.len(), 3);
            let tokens: HashSet<String> = tokenize(&review.text).into_iter().collect();
            assert!(e.words.iter().all(|w| tokens.contains(w)), "{:?} not in {}", e.words, review.id);
            assert_eq!(e.words.iter().collect::<HashSet<_>>().len(), 3);
            e.validate(review).unwrap();
            assert_eq!(e.words, full_sort_oracle(&f, review, ranking), "review {}", review.id);
            matched += 1;
        }
        assert_eq!(matched, 500);
    }
}

#[test]
fn relevance_matches_dense_two_pass_covariance() {
    let f = fixture();
    let corpus = synthetic_corpus(&SynthConfig {
        n_train: 400,
        n_test: 500,
        seed: 17,
        ..SynthConfig::default()
    });
    let train = corpus.split(Split::Train);
    let dim = f.model.features.dimension();
    let dense: Vec<Vec<f64>> = train
        .iter()
        .map(|r| {
            let x = f.model.transform(&r.text);
            (0..dim).map(|j| x.get(j)).collect()
        })
        .collect();
    let ys: Vec<f64> = train
        .iter()
        .map(|r| f.model.predict_proba(&f.model.transform(&r.text)))
        .collect();
    let n = ys.len() as f64;
    let mean_y = ys.iter().sum::<f64>() / n;
    for j in 0..dim {
        let mean_x = dense.iter().map(|row| row[j]).sum::<f64>() / n;
        let cov = dense
            .iter()
            .zip(&ys)
            .map(|(row, y)| (row[j] - mean_x) * (y - mean_y))
            .sum::<f64>()
            / (n - 1.0);
        assert!((cov - f.relevance.values[j]).abs() < 1e-12, "feature {j}");
    }
}
