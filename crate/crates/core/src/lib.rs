//! Contrastive language-audio pretraining for computational paralinguistics.
//!
//! The pipeline turns dataset labels and expert acoustic features into text
//! queries, trains a dual encoder with a symmetric contrastive loss, and
//! classifies audio zero-shot against label queries.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod querygen;
pub mod training;

pub use error::{Error, Result};
