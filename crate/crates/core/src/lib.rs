//! Detecting text-to-image diffusion outputs with small classifiers on top of
//! frozen vision-language embeddings, plus the evaluation and analysis
//! tooling around them.

pub mod corpus;
pub mod embedding;
mod error;
pub mod experiments;
pub mod io;
pub mod linguistics;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};
