//! Interpretable hateful-meme classification.
//!
//! The pipeline turns a meme record plus its precomputed perception
//! annotations into a 13-dimensional engineered block (emotion, sentiment,
//! NLI, lexicon counts) concatenated with a joint tf-idf row, classifies it
//! with a gradient-boosted tree ensemble or a small LSTM over encoder
//! embeddings, and explains each boosted prediction feature by feature.

pub mod augment;
pub mod corpus;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod lexicon;
pub mod metrics;
pub mod neural;
pub mod synthetic;
pub mod vectorizer;

pub use error::{Error, Result};
