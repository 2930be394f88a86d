use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bonferroni, kruskal_wallis, quantile_sorted, AnalysisError};
use crate::explain::{Explanation, Origin};
use crate::rng::rng_for;
use crate::text_model::{train_sgd, FeatureSpace, SparseVector, TrainConfig};
use crate::{derive_seed, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub sizes: Vec<usize>,
    /// `None` means one model per retained subject.
    pub models_per_size: Option<usize>,
    pub holdout_fraction: f64,
    pub lambda: f64,
    pub train: TrainConfig,
    pub alpha: f64,
    /// Redraws allowed when a training sample misses one origin.
    pub max_resamples: usize,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            sizes: vec![5, 10, 20, 30, 40, 50],
            models_per_size: None,
            holdout_fraction: 0.3,
            lambda: 1e-4,
            train: TrainConfig::default(),
            alpha: 0.05,
            max_resamples: 1000,
            seed: 0,
        }
    }
}

/// Holdout accuracies of discriminators trained on `size` explanations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LearningCurve<T> {
    pub size: usize,
    pub accuracies: Vec<T>,
    pub q10: T,
    pub q50: T,
    pub q90: T,
    /// Kruskal-Wallis statistic against the human per-subject accuracies.
    pub statistic: T,
    pub p_value: T,
    pub significant: bool,
}

fn is_human(e: &Explanation) -> bool {
    e.origin == Origin::Human
}

fn train_and_score<T: Scalar>(
    train: &[&Explanation],
    holdout: &[&Explanation],
    lambda: T,
    config: &TrainConfig,
) -> Result<T, AnalysisError> {
    let texts: Vec<String> = train.iter().map(|e| e.as_text()).collect();
    let features = FeatureSpace::<T>::fit(&texts)?;
    let xs: Vec<SparseVector<T>> = texts.iter().map(|t| features.transform(t)).collect();
    let ys: Vec<bool> = train.iter().map(|e| is_human(e)).collect();
    let weights = train_sgd(&xs, &ys, features.dimension(), lambda, config)?;
    let correct = holdout
        .iter()
        .filter(|e| weights.predict(&features.transform(&e.as_text())) == is_human(e))
        .count();
    Ok(T::of_usize(correct) / T::of_usize(holdout.len()))
}

/// Learning curves of a human-vs-machine explanation classifier.
///
/// A seeded `holdout_fraction` of the explanations is set aside for
/// evaluation. For every size, `models_per_size` training sets are drawn
/// without replacement from the rest; each model refits the TF-IDF
/// vocabulary on its three-word documents and trains the logistic model
/// with SGD. Each size's accuracies are compared with
/// `human_accuracies` by a Kruskal-Wallis test, Bonferroni-corrected over
/// the number of sizes.
pub fn discriminator_experiment<T: Scalar>(
    explanations: &[Explanation],
    human_accuracies: &[T],
    config: &DiscriminatorConfig,
) -> Result<Vec<LearningCurve<T>>, AnalysisError> {
    let models = config.models_per_size.unwrap_or(human_accuracies.len());
    if models == 0 {
        return Err(AnalysisError::Infeasible("zero models per size".into()));
    }
    if config.sizes.is_empty() {
        return Err(AnalysisError::Infeasible("no training sizes".into()));
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(AnalysisError::Infeasible("holdout fraction must lie in (0, 1)".into()));
    }
    let mut order: Vec<&Explanation> = explanations.iter().collect();
    order.shuffle(&mut rng_for(config.seed, &["discriminator-holdout"]));
    let n_holdout = (explanations.len() as f64 * config.holdout_fraction).round() as usize;
    let (holdout, pool) = order.split_at(n_holdout);
    let largest = *config.sizes.iter().max().expect("sizes non-empty");
    if holdout.is_empty() || pool.len() < largest {
        return Err(AnalysisError::Infeasible(format!(
            "{} explanations leave {} for training, size {largest} requested",
            explanations.len(),
            pool.len()
        )));
    }
    if !pool.iter().any(|e| is_human(e)) || pool.iter().all(|e| is_human(e)) {
        return Err(AnalysisError::Infeasible("training pool lacks one origin".into()));
    }
    let lambda = T::of(config.lambda);

    let jobs: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&size| (0..models).map(move |m| (size, m)))
        .collect();
    let accuracies: Vec<T> = jobs
        .par_iter()
        .map(|&(size, m)| {
            let labels = ["discriminator-draw", &size.to_string(), &m.to_string()];
            let mut rng = rng_for(config.seed, &labels);
            for _ in 0..=config.max_resamples {
                let mut draw = pool.to_vec();
                let (sample, _) = draw.partial_shuffle(&mut rng, size);
                let humans = sample.iter().filter(|e| is_human(e)).count();
                if humans == 0 || humans == sample.len() {
                    continue;
                }
                let train_config = TrainConfig {
                    seed: derive_seed(config.seed, &["discriminator-sgd", &size.to_string(), &m.to_string()]),
                    ..config.train.clone()
                };
                return train_and_score(sample, holdout, lambda, &train_config);
            }
            Err(AnalysisError::Infeasible(format!(
                "size {size}: no draw with both origins after {} attempts",
                config.max_resamples
            )))
        })
        .collect::<Result<_, _>>()?;

    let mut curves = Vec::with_capacity(config.sizes.len());
    for (k, &size) in config.sizes.iter().enumerate() {
        let accs = accuracies[k * models..(k + 1) * models].to_vec();
        let mut sorted = accs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
        let (statistic, p_value) = match kruskal_wallis(&accs, human_accuracies) {
            Ok(t) => (t.statistic, t.p_value),
            Err(AnalysisError::DegenerateTest) => (T::zero(), T::one()),
            Err(e) => return Err(e),
        };
        curves.push(LearningCurve {
            size,
            q10: quantile_sorted(&sorted, 0.1),
            q50: quantile_sorted(&sorted, 0.5),
            q90: quantile_sorted(&sorted, 0.9),
            accuracies: accs,
            statistic,
            p_value,
            significant: false,
        });
    }
    let p_values: Vec<T> = curves.iter().map(|c| c.p_value).collect();
    for (curve, flag) in curves.iter_mut().zip(bonferroni(&p_values, T::of(config.alpha))) {
        curve.significant = flag;
    }
    Ok(curves)
}
