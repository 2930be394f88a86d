use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SparseVector, TextModelError};
use crate::rng::seeded;
use crate::scalar::{sigmoid, softplus};
use crate::{derive_seed, Scalar};

/// Step size as a function of the update counter `t` (starting at zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    /// `eta0 / (1 + lambda * eta0 * t)`
    InverseScaling { eta0: f64 },
    Constant { eta: f64 },
}

impl LearningRate {
    pub fn at<T: Scalar>(&self, lambda: T, t: usize) -> T {
        match *self {
            LearningRate::InverseScaling { eta0 } => {
                let eta0 = T::of(eta0);
                eta0 / (T::one() + lambda * eta0 * T::of_usize(t))
            }
            LearningRate::Constant { eta } => T::of(eta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: LearningRate,
    pub epochs: usize,
    pub lambda_grid: Vec<f64>,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::InverseScaling { eta0: 0.1 },
            epochs: 10,
            lambda_grid: (0..9).map(|k| 10f64.powi(k - 6)).collect(),
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TextModelError> {
        if self.lambda_grid.is_empty() {
            return Err(TextModelError::InvalidConfig("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(TextModelError::InvalidConfig(
                "lambda values must be finite and non-negative".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TextModelError::InvalidConfig(
                "validation fraction must lie in (0, 1)".into(),
            ));
        }
        let eta = match self.learning_rate {
            LearningRate::InverseScaling { eta0 } => eta0,
            LearningRate::Constant { eta } => eta,
        };
        if !(eta.is_finite() && eta > 0.0) {
            return Err(TextModelError::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Weights, bias and regularization strength of a logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogisticWeights<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub lambda: T,
}

impl<T: Scalar> LogisticWeights<T> {
    pub fn zeros(dimension: usize, lambda: T) -> Self {
        Self {
            weights: vec![T::zero(); dimension],
            bias: T::zero(),
            lambda,
        }
    }

    pub fn decision(&self, x: &SparseVector<T>) -> T {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, x: &SparseVector<T>) -> T {
        sigmoid(self.decision(x))
    }

    pub fn predict(&self, x: &SparseVector<T>) -> bool {
        self.predict_proba(x) >= T::of(0.5)
    }

    pub fn norm(&self) -> T {
        self.weights.iter().map(|&w| w * w).sum::<T>().sqrt()
    }
}

/// Mean logistic loss plus `lambda / 2 * |w|^2`; labels are `true` for the
/// positive class.
pub fn objective<T: Scalar>(
    model: &LogisticWeights<T>,
    features: &[SparseVector<T>],
    labels: &[bool],
) -> T {
    let n = T::of_usize(features.len());
    let data: T = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| example_loss(model.decision(x), y))
        .sum();
    let reg = model.weights.iter().map(|&w| w * w).sum::<T>();
    data / n + model.lambda * reg / T::of(2.0)
}

/// Gradient of [`objective`] with respect to `(weights, bias)`.
pub fn objective_gradient<T: Scalar>(
    model: &LogisticWeights<T>,
    features: &[SparseVector<T>],
    labels: &[bool],
) -> (Vec<T>, T) {
    let n = T::of_usize(features.len());
    let mut grad: Vec<T> = model.weights.iter().map(|&w| model.lambda * w).collect();
    let mut grad_bias = T::zero();
    for (x, &y) in features.iter().zip(labels) {
        let g = (sigmoid(model.decision(x)) - target(y)) / n;
        for (i, v) in x.iter() {
            grad[i] = grad[i] + g * v;
        }
        grad_bias = grad_bias + g;
    }
    (grad, grad_bias)
}

fn target<T: Scalar>(y: bool) -> T {
    if y {
        T::one()
    } else {
        T::zero()
    }
}

fn example_loss<T: Scalar>(z: T, y: bool) -> T {
    softplus(z) - target::<T>(y) * z
}

/// Plain SGD on the regularized logistic loss.
///
/// Each step applies `w <- w - eta_t * (grad_i + lambda * w)` and
/// `b <- b - eta_t * grad_i`, visiting examples in a fresh seeded
/// permutation every epoch. Weights are kept as `scale * v` so that the
/// shrinkage costs O(1) per step on sparse inputs.
pub fn train_sgd<T: Scalar>(
    features: &[SparseVector<T>],
    labels: &[bool],
    dimension: usize,
    lambda: T,
    config: &TrainConfig,
) -> Result<LogisticWeights<T>, TextModelError> {
    if features.len() != labels.len() {
        return Err(TextModelError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        return Err(TextModelError::MissingClass);
    }
    if let Some(x) = features.iter().find(|x| x.min_dimension() > dimension) {
        return Err(TextModelError::DimensionMismatch {
            expected: dimension,
            found: x.min_dimension(),
        });
    }
    if !(lambda.is_finite() && lambda >= T::zero()) {
        return Err(TextModelError::InvalidConfig(
            "lambda must be finite and non-negative".into(),
        ));
    }

    let mut direction = vec![T::zero(); dimension];
    let mut scale = T::one();
    let mut bias = T::zero();
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = seeded(config.seed);
    let mut t = 0usize;
    let rescale_below = T::of(1e-9);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for &i in &order {
            let x = &features[i];
            let z = scale * x.dot(&direction) + bias;
            epoch_loss = epoch_loss + example_loss(z, labels[i]);
            let g = sigmoid(z) - target(labels[i]);
            let eta = config.learning_rate.at(lambda, t);

            scale = scale * (T::one() - eta * lambda);
            if scale.abs() < rescale_below {
                for v in &mut direction {
                    *v = *v * scale;
                }
                scale = T::one();
            }
            let step = eta * g / scale;
            for (j, v) in x.iter() {
                direction[j] = direction[j] - step * v;
            }
            bias = bias - eta * g;
            t += 1;
        }
        if !(epoch_loss.is_finite() && bias.is_finite() && scale.is_finite()) {
            return Err(TextModelError::Diverged { epoch });
        }
    }

    let weights: Vec<T> = direction.into_iter().map(|v| v * scale).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(TextModelError::Diverged {
            epoch: config.epochs.saturating_sub(1),
        });
    }
    Ok(LogisticWeights {
        weights,
        bias,
        lambda,
    })
}

/// Validation accuracy reached by one grid candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub lambda: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome<T> {
    pub weights: LogisticWeights<T>,
    pub candidates: Vec<CandidateScore>,
}

/// Grid search over `config.lambda_grid` on pre-computed features.
///
/// A seeded `validation_fraction` holdout scores every candidate; the best
/// lambda (ties toward the larger value) is refit on all examples with
/// `config.seed`.
pub fn grid_search_vectors<T: Scalar>(
    features: &[SparseVector<T>],
    labels: &[bool],
    dimension: usize,
    config: &TrainConfig,
) -> Result<GridSearchOutcome<T>, TextModelError> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(TextModelError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let n = features.len();
    if n < 2 {
        return Err(TextModelError::MissingClass);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(derive_seed(config.seed, &["validation-split"])));
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);
    let (val_idx, fit_idx) = order.split_at(n_val);

    let fit_x: Vec<SparseVector<T>> = fit_idx.iter().map(|&i| features[i].clone()).collect();
    let fit_y: Vec<bool> = fit_idx.iter().map(|&i| labels[i]).collect();

    let candidates = config
        .lambda_grid
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let candidate_config = TrainConfig {
                seed: derive_seed(config.seed, &["grid-candidate", &k.to_string()]),
                ..config.clone()
            };
            let weights = train_sgd(&fit_x, &fit_y, dimension, T::of(lambda), &candidate_config)?;
            let correct = val_idx
                .iter()
                .filter(|&&i| weights.predict(&features[i]) == labels[i])
                .count();
            Ok(CandidateScore {
                lambda,
                validation_accuracy: correct as f64 / val_idx.len() as f64,
            })
        })
        .collect::<Result<Vec<_>, TextModelError>>()?;

    let best = candidates
        .iter()
        .max_by(|a, b| {
            a.validation_accuracy
                .total_cmp(&b.validation_accuracy)
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .expect("grid is non-empty");
    let weights = train_sgd(features, labels, dimension, T::of(best.lambda), config)?;
    Ok(GridSearchOutcome {
        weights,
        candidates,
    })
}
