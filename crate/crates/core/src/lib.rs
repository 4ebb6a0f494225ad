//! Unsupervised out-of-domain text detection.
//!
//! Two families of detectors are provided:
//!
//! * likelihood scores (LN, LR, NLR and LR with a word-substitution
//!   background) computed from token log-probabilities, with a built-in
//!   add-k n-gram LM for runs that have no external model;
//! * a density detector: a small head over frozen sentence embeddings is
//!   trained with a clustering KL loss plus an NT-Xent contrastive loss, a
//!   diagonal Gaussian mixture is fitted on the adapted ID embeddings and the
//!   negative log-density is the OOD score.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices. Scores are oriented so that higher means
//! more likely OOD.

pub mod datamodel;
pub mod density;
pub mod error;
pub mod eval;
pub mod kmeans;
pub mod likelihood;
pub mod pipeline;
pub mod replearn;
pub mod scalar;
pub mod splits;

pub use error::{ErrorClass, OodError, Result};
pub use scalar::Scalar;

pub type Embeddings = datamodel::EmbeddingSet<f64>;
pub type Embeddings32 = datamodel::EmbeddingSet<f32>;
pub type Gmm = density::GmmModel<f64>;
pub type Gmm32 = density::GmmModel<f32>;
pub type Encoder = replearn::EncoderState<f64>;
pub type Encoder32 = replearn::EncoderState<f32>;
pub type Scored = eval::ScoredSet<f64>;
pub type Scored32 = eval::ScoredSet<f32>;
pub type Detector = pipeline::Detector<f64>;
pub type Detector32 = pipeline::Detector<f32>;
