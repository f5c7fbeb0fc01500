//! Classifier-guided counterfactual generation and evaluation for text
//! classifiers.
//!
//! The crate provides two guidance mechanisms for steering a black-box text
//! generator toward label-flipping counterfactuals:
//!
//! * ante-hoc guidance: feature-attribution scores from the classifier pick
//!   the important words that are injected into the generation prompt
//!   ([`attribution`], [`prompt`]);
//! * post-hoc guidance: the classifier validates a set of generated
//!   candidates and the label-flipping candidate with minimal token edit
//!   distance is selected ([`generate`], [`select`]).
//!
//! Around those sit an in-repo trainable linear classifier with analytic
//! gradients and exact linear SHAP ([`classifier`]), corpus-level metrics
//! (flip rate, token distance, perplexity, modification rate, quality
//! judgments; [`metrics`]), counterfactual data augmentation and a
//! reversed-label faithfulness probe ([`augment`]), and an end-to-end
//! experiment pipeline ([`pipeline`]).
//!
//! Numeric components are generic over the scalar type through [`Scalar`];
//! `f64` aliases are exported at the crate root.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod attribution;
pub mod augment;
pub mod classifier;
pub mod dataset;
pub mod generate;
pub(crate) mod parallel;
pub mod pipeline;
pub mod prompt;
pub mod remote;
pub mod select;
pub mod metrics;
pub mod text;

/// Floating-point scalar the numeric components are generic over.
///
/// Implemented for `f32` and `f64` via the blanket impl.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static
{
}

pub type LinearModelF32 = classifier::LinearModel<f32>;
pub type LinearModelF64 = classifier::LinearModel<f64>;
pub type AttributionF32 = classifier::Attribution<f32>;
pub type AttributionF64 = classifier::Attribution<f64>;
pub type NGramScorerF32 = metrics::NGramScorer<f32>;
pub type NGramScorerF64 = metrics::NGramScorer<f64>;

pub use classifier::{Attribution, Classifier, LinearModel, Prediction, TrainConfig};
pub use dataset::Document;
pub use generate::{CandidateSet, Generator, GeneratorConfig, TextGenerator};
pub use metrics::{EvaluationReport, NGramScorer};
pub use pipeline::{ExperimentConfig, SyntheticCorpus};
pub use prompt::{PromptSpec, Shot, Task};
pub use select::{CounterfactualRecord, Method};
pub use text::TokenSequence;
