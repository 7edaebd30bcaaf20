//! Popularity-driven thumbnail selection with an attention-gated
//! visual-semantic embedding.
//!
//! Frames are scored against a weighted list of popular topic words: each
//! word's prototype generates an attention gate over the frame feature, the
//! gated feature is projected into the word-vector space, and the dot
//! products are summed by topic weight. The popularity score is fused with a
//! cluster-based representativeness score to pick the thumbnail.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod frames;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod rng;
pub mod selector;
pub mod synthgen;
pub mod trainer;
pub mod wordspace;

pub use error::{Error, Result};
