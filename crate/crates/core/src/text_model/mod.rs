//! Unigram TF-IDF features and an L2-regularized logistic regression
//! trained with SGD.

mod features;
mod metrics;
mod sgd;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Review, Sentiment};
use crate::Scalar;

pub use features::{tokenize, FeatureSpace, SparseVector, Vocabulary};
pub use metrics::{render_rows, Averages, ClassMetrics, EvalMetrics, ReportRow, REPORT_COLUMNS};
pub use sgd::{
    grid_search_vectors, objective, objective_gradient, train_sgd, CandidateScore,
    GridSearchOutcome, LearningRate, LogisticWeights, TrainConfig,
};

/// Labels of the sentiment report, class `false` first.
pub const SENTIMENT_LABELS: [&str; 2] = ["negative", "positive"];

const MODEL_FORMAT: &str = "ttt-linear-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TextModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no document in the training set contains a token")]
    NoTokens,
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("training data must contain both classes")]
    MissingClass,
    #[error("feature vector needs dimension {found}, model has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is malformed: {0}")]
    Format(String),
}

/// Fitted feature space and logistic weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T> {
    pub features: FeatureSpace<T>,
    pub weights: LogisticWeights<T>,
    pub config: TrainConfig,
    pub config_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelFile<T> {
    format: String,
    version: u32,
    scalar: String,
    model: LinearModel<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(features: FeatureSpace<T>, weights: LogisticWeights<T>, config: TrainConfig) -> Self {
        let config_fingerprint = config.fingerprint();
        Self {
            features,
            weights,
            config,
            config_fingerprint,
        }
    }

    pub fn lambda(&self) -> T {
        self.weights.lambda
    }

    pub fn transform(&self, text: &str) -> SparseVector<T> {
        self.features.transform(text)
    }

    /// Class likelihood `sigmoid(w.x + b)` of the positive sentiment.
    pub fn predict_proba(&self, x: &SparseVector<T>) -> T {
        self.weights.predict_proba(x)
    }

    pub fn predict_text(&self, text: &str) -> Sentiment {
        Sentiment::from_positive(self.weights.predict(&self.transform(text)))
    }

    /// Serializes to the self-describing model file format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            scalar: T::NAME.into(),
            model: self.clone(),
        };
        serde_json::to_vec(&file).expect("model serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TextModelError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
            scalar: String,
        }
        let header: Header =
            serde_json::from_slice(bytes).map_err(|e| TextModelError::Format(e.to_string()))?;
        if header.format != MODEL_FORMAT || header.version != MODEL_VERSION {
            return Err(TextModelError::Format(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        if header.scalar != T::NAME {
            return Err(TextModelError::Format(format!(
                "model stores {} weights, expected {}",
                header.scalar,
                T::NAME
            )));
        }
        let file: ModelFile<T> =
            serde_json::from_slice(bytes).map_err(|e| TextModelError::Format(e.to_string()))?;
        let model = file.model;
        if model.weights.weights.len() != model.features.dimension()
            || model.features.idf.len() != model.features.dimension()
        {
            return Err(TextModelError::Format("weight/vocabulary size mismatch".into()));
        }
        if model.weights.weights.iter().any(|w| !w.is_finite()) || !model.weights.bias.is_finite() {
            return Err(TextModelError::Format("non-finite weight".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TextModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Fits vocabulary and idf on the given training reviews.
pub fn fit_features<T: Scalar>(train: &[&Review]) -> Result<FeatureSpace<T>, TextModelError> {
    let texts: Vec<&str> = train.iter().map(|r| r.text.as_str()).collect();
    FeatureSpace::fit(&texts)
}

/// Result of [`grid_search`]: the refit model and every candidate's score.
#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub model: LinearModel<T>,
    pub candidates: Vec<CandidateScore>,
}

/// Fits features on `train`, grid-searches lambda and refits on all of it.
pub fn grid_search<T: Scalar>(
    train: &[&Review],
    config: &TrainConfig,
) -> Result<TrainedModel<T>, TextModelError> {
    let features = fit_features::<T>(train)?;
    let xs: Vec<SparseVector<T>> = train.iter().map(|r| features.transform(&r.text)).collect();
    let ys: Vec<bool> = train.iter().map(|r| r.label.is_positive()).collect();
    let outcome = grid_search_vectors(&xs, &ys, features.dimension(), config)?;
    Ok(TrainedModel {
        model: LinearModel::new(features, outcome.weights, config.clone()),
        candidates: outcome.candidates,
    })
}

/// Sentiment report on `reviews` at threshold 0.5 (ties go positive).
pub fn evaluate<T: Scalar>(model: &LinearModel<T>, reviews: &[&Review]) -> EvalMetrics<T> {
    let truth: Vec<bool> = reviews.iter().map(|r| r.label.is_positive()).collect();
    let predicted: Vec<bool> = reviews
        .iter()
        .map(|r| model.predict_text(&r.text).is_positive())
        .collect();
    EvalMetrics::from_predictions(SENTIMENT_LABELS, &truth, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn review(id: &str, text: &str, positive: bool) -> Review {
        Review {
            id: id.into(),
            text: text.into(),
            label: Sentiment::from_positive(positive),
            split: Split::Train,
        }
    }

    fn toy_train() -> Vec<Review> {
        let mut out = Vec::new();
        for i in 0..20 {
            out.push(review(&format!("p{i}"), "great fun movie", true));
            out.push(review(&format!("n{i}"), "awful boring movie", false));
        }
        out
    }

    #[test]
    fn predict_proba_cases() {
        let fs = FeatureSpace::<f64>::fit(&["aa bb"]).unwrap();
        let zero = LinearModel::new(fs.clone(), LogisticWeights::zeros(2, 0.0), TrainConfig::default());
        assert_eq!(zero.predict_proba(&fs.transform("aa")), 0.5);
        let mut w = LogisticWeights::zeros(2, 0.0);
        w.bias = 3f64.ln();
        let m = LinearModel::new(fs.clone(), w, TrainConfig::default());
        assert!((m.predict_proba(&SparseVector::zero()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn trains_and_evaluates_toy_corpus() {
        let train = toy_train();
        let refs: Vec<&Review> = train.iter().collect();
        let trained = grid_search::<f64>(&refs, &TrainConfig::with_seed(5)).unwrap();
        let metrics = evaluate(&trained.model, &refs);
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!(trained.candidates.len(), 9);
    }

    #[test]
    fn model_file_round_trips_exactly() {
        let train = toy_train();
        let refs: Vec<&Review> = train.iter().collect();
        let model = grid_search::<f64>(&refs, &TrainConfig::with_seed(5)).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        model.save(&path).unwrap();
        let back = LinearModel::<f64>::load(&path).unwrap();
        assert_eq!(back, model);
        assert!(matches!(
            LinearModel::<f32>::load(&path),
            Err(TextModelError::Format(_))
        ));
        assert!(LinearModel::<f64>::from_bytes(b"{\"format\":\"other\",\"version\":1,\"scalar\":\"f64\"}").is_err());
    }

    #[test]
    fn f32_pipeline_runs() {
        let train = toy_train();
        let refs: Vec<&Review> = train.iter().collect();
        let model = grid_search::<f32>(&refs, &TrainConfig::with_seed(5)).unwrap().model;
        assert_eq!(evaluate(&model, &refs).accuracy, 1.0f32);
    }
}
