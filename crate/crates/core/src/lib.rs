//! Calibrated similarity-score fusion for closed-set identity retrieval.
//!
//! Given a query set and a database of items with known identities, this
//! crate combines heterogeneous similarity signals into one ranking score:
//!
//! * global scores: cosine similarity between fixed-length embeddings;
//! * local scores: counts of feature matches whose confidence clears a
//!   threshold mu.
//!
//! Raw scores live on incompatible scales, so each is first passed through
//! a fitted strictly increasing calibration map onto [0, 1] (isotonic
//! regression with monotone cubic interpolation, or Platt scaling) and the
//! calibrated scores are fused by a weighted average. The retrieval layer
//! adds top-1 evaluation, mu grid search, low-data calibration subsampling
//! and budgeted shortlist re-ranking for expensive scorers.

pub mod calibration;
pub mod data;
pub mod error;
pub mod fusion;
pub mod io;
pub mod pipeline;
pub mod retrieval;
pub mod seeds;
pub mod similarity;

pub use error::{Error, Result};
