//! Tools for measuring how OCR noise changes distributional word embeddings.
//!
//! The pipeline trains identical model configurations on the OCR and the
//! ground-truth side of an aligned corpus and compares the two embedding
//! spaces through top-k neighbour overlap.

pub mod cooccurrence;
pub mod corpus;
pub mod error;
pub mod noise;
pub mod overlap;
pub mod preprocess;
pub mod report;
pub mod synthetic;
pub mod trainers;

pub use error::{Error, Result};
