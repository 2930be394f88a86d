//! Labeled review corpus and the fixed-accuracy experiment subset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_for;
use crate::text_model::LinearModel;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Sentiment::Positive
    }

    pub fn flipped(self) -> Self {
        Self::from_positive(!self.is_positive())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Positive => "positive",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" | "pos" => Ok(Sentiment::Positive),
            "negative" | "neg" => Ok(Sentiment::Negative),
            other => Err(format!("unknown sentiment {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub text: String,
    pub label: Sentiment,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `<root>/{train,test}/{pos,neg}/<name>.txt`; the review id is
    /// `<split>/<class>/<name>` because file names repeat across folders.
    DirectoryPerClass,
    /// One JSON object per line with `id`, `text`, `label` and `split`.
    RecordLines,
}

impl CorpusFormat {
    /// Directories use the folder layout, files the record-lines format.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            CorpusFormat::DirectoryPerClass
        } else {
            CorpusFormat::RecordLines
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus path {0} does not exist")]
    MissingPath(PathBuf),
    #[error("malformed record at {location}: {reason}")]
    Malformed { location: String, reason: String },
    #[error("duplicate review id {0:?}")]
    DuplicateId(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot select subset: {0}")]
    InfeasibleTarget(String),
    #[error("size * target accuracy = {0} is not an integer")]
    NonIntegerCount(f64),
    #[error("unknown review id {0:?}")]
    UnknownReview(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Immutable collection of reviews ordered by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    reviews: Vec<Review>,
}

impl Corpus {
    pub fn new(mut reviews: Vec<Review>) -> Result<Self, CorpusError> {
        reviews.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = reviews.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CorpusError::DuplicateId(w[0].id.clone()));
        }
        if let Some(r) = reviews.iter().find(|r| r.text.trim().is_empty()) {
            return Err(CorpusError::Malformed {
                location: r.id.clone(),
                reason: "empty text".into(),
            });
        }
        Ok(Self { reviews })
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Review> {
        self.reviews
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.reviews[i])
    }

    pub fn split(&self, split: Split) -> Vec<&Review> {
        self.reviews.iter().filter(|r| r.split == split).collect()
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingPath(path.to_path_buf()));
    }
    let reviews = match format {
        CorpusFormat::DirectoryPerClass => load_directory(path)?,
        CorpusFormat::RecordLines => load_record_lines(path)?,
    };
    Corpus::new(reviews)
}

fn load_directory(root: &Path) -> Result<Vec<Review>, CorpusError> {
    let mut reviews = Vec::new();
    for (split_dir, split) in [("train", Split::Train), ("test", Split::Test)] {
        for (class_dir, label) in [("pos", Sentiment::Positive), ("neg", Sentiment::Negative)] {
            let dir = root.join(split_dir).join(class_dir);
            if !dir.is_dir() {
                continue;
            }
            let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(io_err(&dir))?
                .map(|e| e.map(|e| e.path()).map_err(io_err(&dir)))
                .collect::<Result<_, _>>()?;
            entries.retain(|p| p.extension().is_some_and(|e| e == "txt"));
            entries.sort();
            for file in entries {
                let bytes = fs::read(&file).map_err(io_err(&file))?;
                let text = String::from_utf8(bytes).map_err(|_| CorpusError::Malformed {
                    location: file.display().to_string(),
                    reason: "not valid UTF-8".into(),
                })?;
                if text.trim().is_empty() {
                    return Err(CorpusError::Malformed {
                        location: file.display().to_string(),
                        reason: "empty text".into(),
                    });
                }
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                reviews.push(Review {
                    id: format!("{split_dir}/{class_dir}/{stem}"),
                    text,
                    label,
                    split,
                });
            }
        }
    }
    Ok(reviews)
}

fn load_record_lines(path: &Path) -> Result<Vec<Review>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reviews = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), n + 1);
        let review: Review = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            location: location.clone(),
            reason: e.to_string(),
        })?;
        if review.text.trim().is_empty() {
            return Err(CorpusError::Malformed {
                location: format!("{location} (id {:?})", review.id),
                reason: "empty text".into(),
            });
        }
        if review.id.is_empty() {
            return Err(CorpusError::Malformed {
                location,
                reason: "empty id".into(),
            });
        }
        reviews.push(review);
    }
    Ok(reviews)
}

/// Writes the corpus in the record-lines format.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for review in corpus.reviews() {
        let line = serde_json::to_string(review).expect("review serializes");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// The reviews shown to participants, with whether the model got each one
/// right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSubset {
    pub review_ids: Vec<String>,
    pub model_correct: BTreeMap<String, bool>,
    /// Full review records, so the experiment service runs without the corpus.
    pub reviews: Vec<Review>,
    pub seed: u64,
}

impl ExperimentSubset {
    pub fn len(&self) -> usize {
        self.review_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.review_ids.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        let correct = self.model_correct.values().filter(|&&c| c).count();
        correct as f64 / self.model_correct.len() as f64
    }

    pub fn review(&self, id: &str) -> Option<&Review> {
        self.reviews.iter().find(|r| r.id == id)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let json = serde_json::to_vec_pretty(self).expect("subset serializes");
        fs::write(path, json).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let subset: Self = serde_json::from_slice(&bytes).map_err(|e| CorpusError::Malformed {
            location: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let ids: BTreeSet<&str> = subset.review_ids.iter().map(String::as_str).collect();
        let keys: BTreeSet<&str> = subset.model_correct.keys().map(String::as_str).collect();
        let stored: BTreeSet<&str> = subset.reviews.iter().map(|r| r.id.as_str()).collect();
        if ids.len() != subset.review_ids.len() || ids != keys || ids != stored {
            return Err(CorpusError::Malformed {
                location: path.display().to_string(),
                reason: "review ids, correctness map and reviews disagree".into(),
            });
        }
        Ok(subset)
    }
}

/// Draws `size` test reviews of which exactly `size * target_accuracy` are
/// classified correctly by `model`, sampling uniformly within the correct
/// and incorrect strata under `seed`.
pub fn select_experiment_subset<T: Scalar>(
    corpus: &Corpus,
    model: &LinearModel<T>,
    target_accuracy: f64,
    size: usize,
    seed: u64,
) -> Result<ExperimentSubset, CorpusError> {
    if !(0.0..=1.0).contains(&target_accuracy) {
        return Err(CorpusError::InfeasibleTarget(format!(
            "target accuracy {target_accuracy} outside [0, 1]"
        )));
    }
    let exact = size as f64 * target_accuracy;
    let n_correct = exact.round();
    if (exact - n_correct).abs() > 1e-9 {
        return Err(CorpusError::NonIntegerCount(exact));
    }
    let n_correct = n_correct as usize;
    let n_wrong = size - n_correct;

    let (correct, wrong): (Vec<&Review>, Vec<&Review>) = corpus
        .split(Split::Test)
        .into_iter()
        .partition(|r| model.predict_text(&r.text) == r.label);
    if correct.len() < n_correct || wrong.len() < n_wrong {
        return Err(CorpusError::InfeasibleTarget(format!(
            "need {n_correct} correct and {n_wrong} incorrect predictions, test split has {} and {}",
            correct.len(),
            wrong.len()
        )));
    }

    let mut rng = rng_for(seed, &["experiment-subset"]);
    let mut chosen: Vec<(&Review, bool)> = correct
        .choose_multiple(&mut rng, n_correct)
        .map(|r| (*r, true))
        .chain(wrong.choose_multiple(&mut rng, n_wrong).map(|r| (*r, false)))
        .collect();
    chosen.shuffle(&mut rng);

    Ok(ExperimentSubset {
        review_ids: chosen.iter().map(|(r, _)| r.id.clone()).collect(),
        model_correct: chosen.iter().map(|(r, c)| (r.id.clone(), *c)).collect(),
        reviews: chosen.iter().map(|(r, _)| (*r).clone()).collect(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, text: &str) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, text).unwrap();
    }

    #[test]
    fn loads_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write(&root.join("train/pos/1_9.txt"), "great film");
        write(&root.join("train/pos/2_8.txt"), "loved it");
        write(&root.join("train/neg/1_2.txt"), "awful film");
        write(&root.join("test/neg/1_1.txt"), "boring");
        write(&root.join("train/unsup/0_0.txt"), "ignored");
        let corpus = load_corpus(root, CorpusFormat::DirectoryPerClass).unwrap();
        assert_eq!(corpus.len(), 4);
        let r = corpus.get("train/pos/1_9").unwrap();
        assert_eq!((r.label, r.split), (Sentiment::Positive, Split::Train));
        assert_eq!(corpus.get("test/neg/1_1").unwrap().label, Sentiment::Negative);
        let ids: Vec<&str> = corpus.reviews().iter().map(|r| r.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn record_lines_cases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write(&path, r#"{"id":"r1","text":"fine","label":"positive","split":"train"}"#);
        let corpus = load_corpus(&path, CorpusFormat::RecordLines).unwrap();
        assert_eq!(corpus.len(), 1);

        write(
            &path,
            "{\"id\":\"r1\",\"text\":\"fine\",\"label\":\"positive\",\"split\":\"train\"}\n{\"id\":\"r2\",\"text\":\"\",\"label\":\"negative\",\"split\":\"test\"}\n",
        );
        match load_corpus(&path, CorpusFormat::RecordLines) {
            Err(CorpusError::Malformed { location, .. }) => {
                assert!(location.contains(":2") && location.contains("r2"), "{location}")
            }
            other => panic!("{other:?}"),
        }

        write(&path, "{\"id\":\"r1\",\"text\":\"x\",\"label\":\"meh\",\"split\":\"train\"}\n");
        assert!(matches!(
            load_corpus(&path, CorpusFormat::RecordLines),
            Err(CorpusError::Malformed { .. })
        ));

        let dup = r#"{"id":"r1","text":"a","label":"positive","split":"train"}"#;
        write(&path, &format!("{dup}\n{dup}\n"));
        assert!(matches!(
            load_corpus(&path, CorpusFormat::RecordLines),
            Err(CorpusError::DuplicateId(id)) if id == "r1"
        ));

        assert!(matches!(
            load_corpus(&dir.path().join("nope"), CorpusFormat::RecordLines),
            Err(CorpusError::MissingPath(_))
        ));
    }

    #[test]
    fn directory_empty_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("test/pos/3_7.txt"), "  ");
        match load_corpus(dir.path(), CorpusFormat::DirectoryPerClass) {
            Err(CorpusError::Malformed { location, .. }) => assert!(location.ends_with("3_7.txt")),
            other => panic!("{other:?}"),
        }
    }
}
