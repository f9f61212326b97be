//! Low-budget active-learning sample selection over precomputed feature
//! embeddings.
//!
//! The pool lives in an [`EmbeddingMatrix`]; strategies in [`strategies`]
//! turn it into a [`SelectionResult`] of row indices to annotate, and
//! [`classifiers`] and [`metrics`] score the selection with a linear probe,
//! cosine nearest-neighbour, and category coverage.

pub mod classifiers;
pub mod error;
pub mod kmeans;
pub mod metrics;
pub mod rng;
pub mod store;
pub mod strategies;
pub mod synth;

pub use error::{Error, Result};
pub use kmeans::{Centroids, KMeansParams};
pub use store::{EmbeddingMatrix, LabelVector, NormStats, SelectionResult};
pub use strategies::{BudgetSchedule, Strategy, StrategyConfig};
