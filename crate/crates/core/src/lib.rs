//! Differentially private collective matrix factorization.
//!
//! Ratings `M` (users x items) and a public item-feature matrix `S`
//! (features x items) are factorized jointly as `M ~ U V^T`, `S ~ F V^T`
//! with shared item embeddings `V`. In the private modes each item update is
//! computed from Gaussian-perturbed sufficient statistics under per-user
//! weight caps, giving user-level `(epsilon, delta)` differential privacy for
//! the released `V` and `F`; `U` never leaves the user side.
//!
//! Start with [`trainer::train`] and [`trainer::TrainConfig`]; the runnable
//! programs under `examples/` cover each capability end to end.

pub mod checkpoint;
pub mod cli;
pub mod cmf;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod linalg;
pub mod privacy;
pub mod rng;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use cmf::{CmfHyperparams, EmbeddingSet, WeightAssignment};
pub use dataset::{FeatureDataset, RatingDataset};
pub use error::{Error, ErrorKind, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use privacy::{compute_beta, ClipParams, PrivacyBudget};
pub use trainer::{train, Mode, TrainConfig, TrainReport};
