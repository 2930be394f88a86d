//! Core library for running a Turing test on machine-generated explanations.
//!
//! The pipeline has four stages:
//!
//! * [`corpus`] loads labeled movie reviews and picks a fixed experiment
//!   subset at a controlled model accuracy.
//! * [`text_model`] is a unigram TF-IDF + L2 logistic regression classifier
//!   trained with SGD and a grid search over the regularization strength.
//! * [`explain`] turns the covariance between features and the predicted
//!   class likelihood into three-word explanations.
//! * [`protocol`] runs the two-phase human experiment on top of an
//!   append-only event log, and [`analysis`] computes the judgment metrics,
//!   correlations, discriminator learning curves and significance tests.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the experiment service and
//! the analysis use.

pub mod analysis;
pub mod corpus;
pub mod explain;
pub mod protocol;
pub mod report;
mod rng;
pub mod scalar;
pub mod synth;
pub mod text_model;

pub use scalar::Scalar;
pub use rng::derive_seed;

pub type SparseVector = text_model::SparseVector<f64>;
pub type SparseVectorF32 = text_model::SparseVector<f32>;
pub type FeatureSpace = text_model::FeatureSpace<f64>;
pub type FeatureSpaceF32 = text_model::FeatureSpace<f32>;
pub type LogisticWeights = text_model::LogisticWeights<f64>;
pub type LogisticWeightsF32 = text_model::LogisticWeights<f32>;
pub type LinearModel = text_model::LinearModel<f64>;
pub type LinearModelF32 = text_model::LinearModel<f32>;
pub type EvalMetrics = text_model::EvalMetrics<f64>;
pub type EvalMetricsF32 = text_model::EvalMetrics<f32>;
pub type RelevanceVector = explain::RelevanceVector<f64>;
pub type RelevanceVectorF32 = explain::RelevanceVector<f32>;
pub type TestResult = analysis::TestResult<f64>;
pub type TestResultF32 = analysis::TestResult<f32>;
pub type LearningCurve = analysis::LearningCurve<f64>;
pub type LearningCurveF32 = analysis::LearningCurve<f32>;
