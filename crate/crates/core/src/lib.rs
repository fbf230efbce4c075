//! Warm-starting classification heads.
//!
//! A new head for `N` target classes is built from the `M x D` weight rows
//! of a trained source head: each target row is a normalized combination of
//! the rows of its `K` most similar source classes. Similarity comes from a
//! taxonomy (Wu & Palmer), from averaged word embeddings (cosine), or from
//! running target samples through the source head (per-output F1).
//!
//! Modules:
//! - [`matrixio`]: text formats for matrices, labels, predictions, features
//! - [`taxonomy`]: is-a graph, Wu & Palmer, target-type classification
//! - [`embedsim`]: embedding table, label embedding, cosine similarity
//! - [`infersim`]: classifier head, inference similarity
//! - [`warmstart`]: neighbor selection, row combination, Xavier baseline
//! - [`trainer`]: softmax head training with Adam and dropout
//! - [`experiment`]: synthetic tasks and the comparison protocols
//! - [`cli`]: command-line front end

pub mod cli;
pub mod embedsim;
pub mod error;
pub mod experiment;
pub mod infersim;
pub mod matrixio;
pub mod taxonomy;
pub mod trainer;
pub mod warmstart;

pub use error::{Error, Result};
pub use infersim::{ClassifierHead, SimilarityMatrix};
pub use matrixio::{FeatureDataset, LabelSet, Matrix, PredictionRecord};
pub use taxonomy::{Taxonomy, TargetType};
pub use trainer::{MetricHistory, TrainConfig};
pub use warmstart::InitSpec;
