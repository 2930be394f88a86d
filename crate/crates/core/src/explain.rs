//! Covariance relevance and three-word machine explanations.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Review, Sentiment};
use crate::rng::rng_for;
use crate::text_model::{tokenize, LinearModel, SparseVector};
use crate::Scalar;

/// Words per explanation shown to participants.
pub const EXPLANATION_WORDS: usize = 3;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("covariance needs at least 2 reviews, got {0}")]
    TooFewReviews(usize),
    #[error("review {review_id} has {found} distinct known tokens, need {needed}")]
    InsufficientTokens {
        review_id: String,
        found: usize,
        needed: usize,
    },
    #[error("invalid explanation for {review_id}: {reason}")]
    InvalidExplanation { review_id: String, reason: String },
    #[error("explanations file {location}: {reason}")]
    Format { location: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-token covariance between TF-IDF value and class likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RelevanceVector<T> {
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Machine,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Human => "human",
            Origin::Machine => "machine",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Origin::Human),
            "machine" | "ai" => Ok(Origin::Machine),
            other => Err(format!("unknown origin {other:?}")),
        }
    }
}

/// The words deemed most relevant for one review's sentiment, and who
/// picked them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub review_id: String,
    pub origin: Origin,
    pub words: Vec<String>,
    pub predicted_label: Sentiment,
}

impl Explanation {
    /// Checks the experiment invariant: exactly three distinct words, each a
    /// token of the review text.
    pub fn validate(&self, review: &Review) -> Result<(), ExplainError> {
        let invalid = |reason: String| ExplainError::InvalidExplanation {
            review_id: self.review_id.clone(),
            reason,
        };
        if self.review_id != review.id {
            return Err(invalid(format!("checked against review {}", review.id)));
        }
        check_marked_words(&self.words, &review.text).map_err(invalid)
    }

    /// The explanation as a document for the discriminator pipeline.
    pub fn as_text(&self) -> String {
        self.words.join(" ")
    }
}

/// Shared validation of three marked words against a review text; the error
/// names the offending word.
pub fn check_marked_words(words: &[String], text: &str) -> Result<(), String> {
    if words.len() != EXPLANATION_WORDS {
        return Err(format!(
            "expected {EXPLANATION_WORDS} words, got {}",
            words.len()
        ));
    }
    let distinct: HashSet<&str> = words.iter().map(String::as_str).collect();
    if distinct.len() != words.len() {
        return Err("marked words are not distinct".into());
    }
    let tokens: HashSet<String> = tokenize(text).into_iter().collect();
    if let Some(word) = words.iter().find(|w| !tokens.contains(*w)) {
        return Err(format!("word {word:?} does not occur in the review"));
    }
    Ok(())
}

/// Sample covariance of every feature column with a likelihood vector.
///
/// Uses `sum_i x_ij d_i - mean_j * sum_i d_i` with `d` the centered
/// likelihoods, which equals the two-pass formula but only touches the
/// non-zero entries.
pub fn covariance_with_likelihood<T: Scalar>(
    features: &[SparseVector<T>],
    likelihoods: &[T],
    dimension: usize,
) -> Result<RelevanceVector<T>, ExplainError> {
    let n = features.len();
    if n < 2 {
        return Err(ExplainError::TooFewReviews(n));
    }
    assert_eq!(n, likelihoods.len(), "one likelihood per review");
    let nf = T::of_usize(n);
    let mean_y = likelihoods.iter().copied().sum::<T>() / nf;
    let centered: Vec<T> = likelihoods.iter().map(|&y| y - mean_y).collect();
    let centered_sum: T = centered.iter().copied().sum();

    let mut column_sum = vec![T::zero(); dimension];
    let mut cross = vec![T::zero(); dimension];
    for (x, &d) in features.iter().zip(&centered) {
        for (j, v) in x.iter() {
            column_sum[j] = column_sum[j] + v;
            cross[j] = cross[j] + v * d;
        }
    }
    let denom = nf - T::one();
    let values = cross
        .into_iter()
        .zip(column_sum)
        .map(|(c, s)| (c - s / nf * centered_sum) / denom)
        .collect();
    Ok(RelevanceVector { values })
}

/// Covariance of each TF-IDF feature with the model's positive-class
/// likelihood over `reviews` (normally the training split).
pub fn relevance_covariance<T: Scalar>(
    model: &LinearModel<T>,
    reviews: &[&Review],
) -> Result<RelevanceVector<T>, ExplainError> {
    let features: Vec<SparseVector<T>> = reviews.iter().map(|r| model.transform(&r.text)).collect();
    let likelihoods: Vec<T> = features.iter().map(|x| model.predict_proba(x)).collect();
    covariance_with_likelihood(&features, &likelihoods, model.features.dimension())
}

/// How per-review scores are ranked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// Largest score for positive predictions, smallest for negative ones.
    #[default]
    Signed,
    /// Largest magnitude regardless of the predicted class.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub k: usize,
    pub ranking: Ranking,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            k: EXPLANATION_WORDS,
            ranking: Ranking::Signed,
        }
    }
}

/// A known token of a review with its relevance score `x_j * r_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredToken<T> {
    pub token: String,
    pub first_position: usize,
    pub score: T,
}

/// Scores of the distinct known tokens of `text`, in first-occurrence order.
pub fn token_scores<T: Scalar>(
    model: &LinearModel<T>,
    relevance: &RelevanceVector<T>,
    text: &str,
) -> (Vec<ScoredToken<T>>, Sentiment) {
    let x = model.transform(text);
    let predicted = Sentiment::from_positive(model.weights.predict(&x));
    let vocabulary = &model.features.vocabulary;
    let mut seen = HashSet::new();
    let scored = tokenize(text)
        .into_iter()
        .enumerate()
        .filter_map(|(position, token)| {
            let j = vocabulary.index_of(&token)?;
            if !seen.insert(j) {
                return None;
            }
            Some(ScoredToken {
                token,
                first_position: position,
                score: x.get(j) * relevance.values[j],
            })
        })
        .collect();
    (scored, predicted)
}

/// Ranking key: larger is more relevant.
pub fn ranking_key<T: Scalar>(score: T, predicted: Sentiment, ranking: Ranking) -> T {
    match ranking {
        Ranking::Signed if predicted.is_positive() => score,
        Ranking::Signed => -score,
        Ranking::Absolute => score.abs(),
    }
}

/// Top-k selection over tokens already in first-occurrence order; a later
/// token displaces an earlier one only with a strictly larger key.
fn select_top<T: Scalar>(scored: Vec<ScoredToken<T>>, k: usize, key: impl Fn(T) -> T) -> Vec<String> {
    let mut top: Vec<(T, String)> = Vec::with_capacity(k + 1);
    for candidate in scored {
        let value = key(candidate.score);
        let slot = top.iter().position(|(v, _)| value > *v).unwrap_or(top.len());
        if slot < k {
            top.insert(slot, (value, candidate.token));
            top.truncate(k);
        }
    }
    top.into_iter().map(|(_, token)| token).collect()
}

/// The `k` words of `review` most relevant to the model's prediction.
pub fn machine_explanation<T: Scalar>(
    model: &LinearModel<T>,
    relevance: &RelevanceVector<T>,
    review: &Review,
    options: ExplainOptions,
) -> Result<Explanation, ExplainError> {
    let (scored, predicted) = token_scores(model, relevance, &review.text);
    if scored.len() < options.k {
        return Err(ExplainError::InsufficientTokens {
            review_id: review.id.clone(),
            found: scored.len(),
            needed: options.k,
        });
    }
    let words = select_top(scored, options.k, |s| ranking_key(s, predicted, options.ranking));
    Ok(Explanation {
        review_id: review.id.clone(),
        origin: Origin::Machine,
        words,
        predicted_label: predicted,
    })
}

/// Machine explanations for many reviews; reviews that cannot be explained
/// are returned separately with the reason.
pub fn explain_reviews<T: Scalar>(
    model: &LinearModel<T>,
    relevance: &RelevanceVector<T>,
    reviews: &[&Review],
    options: ExplainOptions,
) -> (Vec<Explanation>, Vec<ExplainError>) {
    let mut explained = Vec::new();
    let mut excluded = Vec::new();
    for review in reviews {
        match machine_explanation(model, relevance, review, options) {
            Ok(e) => explained.push(e),
            Err(e) => excluded.push(e),
        }
    }
    (explained, excluded)
}

pub fn write_explanations(path: &Path, explanations: &[Explanation]) -> Result<(), ExplainError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in explanations {
        writeln!(out, "{}", serde_json::to_string(e).expect("explanation serializes"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_explanations(path: &Path) -> Result<Vec<Explanation>, ExplainError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ExplainError::Format {
            location: format!("{}:{}", path.display(), n + 1),
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Human-only, machine-only and shared words for one sentiment class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSetComparison {
    pub class: Sentiment,
    pub pool_size: usize,
    pub human_only: BTreeSet<String>,
    pub machine_only: BTreeSet<String>,
    pub shared: BTreeSet<String>,
}

impl WordSetComparison {
    /// Up to `n` words drawn from each set, for display.
    pub fn sample(&self, n: usize, seed: u64) -> [Vec<String>; 3] {
        let mut rng = rng_for(seed, &["word-set-sample", self.class.as_str()]);
        [&self.human_only, &self.machine_only, &self.shared].map(|set| {
            let words: Vec<&String> = set.iter().collect();
            let mut picked: Vec<String> = words.choose_multiple(&mut rng, n).map(|w| (*w).clone()).collect();
            picked.sort();
            picked
        })
    }
}

fn pool(explanations: &[Explanation], class: Sentiment) -> Vec<String> {
    let set: BTreeSet<&String> = explanations
        .iter()
        .filter(|e| e.predicted_label == class)
        .flat_map(|e| &e.words)
        .collect();
    set.into_iter().cloned().collect()
}

/// Pools the distinct words of each origin for `class`, downsamples the
/// larger pool uniformly (seeded) to the size of the smaller one and
/// compares the equalized pools.
pub fn word_set_comparison(
    human: &[Explanation],
    machine: &[Explanation],
    class: Sentiment,
    seed: u64,
) -> WordSetComparison {
    let mut human_pool = pool(human, class);
    let mut machine_pool = pool(machine, class);
    let size = human_pool.len().min(machine_pool.len());
    let mut rng = rng_for(seed, &["word-set-downsample", class.as_str()]);
    for p in [&mut human_pool, &mut machine_pool] {
        if p.len() > size {
            p.shuffle(&mut rng);
            p.truncate(size);
        }
    }
    let h: BTreeSet<String> = human_pool.into_iter().collect();
    let m: BTreeSet<String> = machine_pool.into_iter().collect();
    WordSetComparison {
        class,
        pool_size: size,
        human_only: h.difference(&m).cloned().collect(),
        machine_only: m.difference(&h).cloned().collect(),
        shared: h.intersection(&m).cloned().collect(),
    }
}
