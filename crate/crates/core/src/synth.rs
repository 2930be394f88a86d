//! Seeded synthetic review corpora for desk-scale runs and tests.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{select_experiment_subset, Corpus, ExperimentSubset, Review, Sentiment, Split};
use crate::explain::{explain_reviews, relevance_covariance, ExplainOptions, Explanation};
use crate::protocol::ExperimentMaterials;
use crate::text_model::{grid_search, LinearModel, TrainConfig};
use crate::rng::rng_for;

const POSITIVE: &[&str] = &[
    "great", "excellent", "brilliant", "superb", "enjoyed", "magnificent", "wonderful", "loved",
    "beautiful", "hilarious", "touching", "masterpiece", "recommend", "gripping", "charming",
];
const NEGATIVE: &[&str] = &[
    "awful", "horrible", "dull", "worst", "ridiculous", "boring", "waste", "terrible", "unfunny",
    "disappointing", "nonsensical", "poorly", "mess", "lame", "annoying",
];
const NEUTRAL: &[&str] = &[
    "movie", "film", "story", "plot", "actor", "scene", "director", "character", "ending", "cast",
    "script", "music", "family", "premise", "camera", "sequel", "minutes", "screen", "dialogue",
    "role", "studio", "version", "audience", "budget", "house", "night", "city", "war", "friend",
    "village", "doctor", "journey", "island", "letter", "summer", "train", "school", "money",
];

/// Shape of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Tokens per review, inclusive range.
    pub length: (usize, usize),
    /// Probability that a token is a sentiment word rather than filler.
    pub sentiment_rate: f64,
    /// Probability that a sentiment word comes from the opposite class.
    pub confusion: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 400,
            n_test: 400,
            length: (12, 30),
            sentiment_rate: 0.15,
            confusion: 0.3,
            seed: 0,
        }
    }
}

pub fn review_text(label: Sentiment, config: &SynthConfig, rng: &mut impl Rng) -> String {
    let (own, other) = if label.is_positive() {
        (POSITIVE, NEGATIVE)
    } else {
        (NEGATIVE, POSITIVE)
    };
    let len = rng.random_range(config.length.0..=config.length.1);
    let words: Vec<&str> = (0..len)
        .map(|_| {
            let pool = if rng.random_bool(config.sentiment_rate) {
                if rng.random_bool(config.confusion) {
                    other
                } else {
                    own
                }
            } else {
                NEUTRAL
            };
            *pool.choose(rng).expect("word lists are non-empty")
        })
        .collect();
    let mut text = words.join(" ");
    text.push('.');
    text
}

/// Generates a corpus with alternating labels in each split.
pub fn synthetic_corpus(config: &SynthConfig) -> Corpus {
    let mut rng = rng_for(config.seed, &["synthetic-corpus"]);
    let mut reviews = Vec::with_capacity(config.n_train + config.n_test);
    for (split, n, prefix) in [(Split::Train, config.n_train, "train"), (Split::Test, config.n_test, "test")] {
        for i in 0..n {
            let label = Sentiment::from_positive(i % 2 == 0);
            reviews.push(Review {
                id: format!("{prefix}-{i:05}"),
                text: review_text(label, config, &mut rng),
                label,
                split,
            });
        }
    }
    Corpus::new(reviews).expect("synthetic ids are unique and texts non-empty")
}

/// Every artifact the experiment service needs, built end to end from a
/// synthetic corpus.
#[derive(Debug, Clone)]
pub struct SyntheticExperiment {
    pub corpus: Corpus,
    pub model: LinearModel<f64>,
    pub subset: ExperimentSubset,
    pub explanations: Vec<Explanation>,
}

impl SyntheticExperiment {
    /// Trains on the train split, picks a 50-review subset at 80% accuracy
    /// and explains it with covariance relevance from the train split.
    pub fn build(corpus: SynthConfig, seed: u64) -> Result<Self, String> {
        let corpus = synthetic_corpus(&corpus);
        let train = corpus.split(Split::Train);
        let model = grid_search::<f64>(&train, &TrainConfig::with_seed(seed))
            .map_err(|e| e.to_string())?
            .model;
        let subset = select_experiment_subset(&corpus, &model, 0.8, 50, seed).map_err(|e| e.to_string())?;
        let relevance = relevance_covariance(&model, &train).map_err(|e| e.to_string())?;
        let reviews: Vec<&Review> = subset.reviews.iter().collect();
        let (explanations, excluded) = explain_reviews(&model, &relevance, &reviews, ExplainOptions::default());
        if let Some(e) = excluded.first() {
            return Err(e.to_string());
        }
        Ok(Self {
            corpus,
            model,
            subset,
            explanations,
        })
    }

    pub fn materials(&self) -> ExperimentMaterials {
        ExperimentMaterials::from_subset(&self.subset, self.explanations.clone())
            .expect("subset and explanations agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let config = SynthConfig {
            n_train: 10,
            n_test: 6,
            ..SynthConfig::default()
        };
        let a = synthetic_corpus(&config);
        assert_eq!(a, synthetic_corpus(&config));
        assert_eq!(a.split(Split::Train).len(), 10);
        let positives = a.split(Split::Test).iter().filter(|r| r.label.is_positive()).count();
        assert_eq!(positives, 3);
    }
}
