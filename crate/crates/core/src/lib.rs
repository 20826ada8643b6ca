//! Label-conditioned text augmentation for imbalanced binary
//! classification, with teacher-student consistency training to keep
//! noisy synthetic documents from degrading the classifier.

pub mod augment;
pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod exp;
pub mod genlm;
pub mod metrics;
pub(crate) mod io;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
