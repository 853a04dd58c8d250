//! Extractive summarization with a recurrent sentence classifier.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffcore`]: reverse-mode differentiation over `f64` tensors
//! - [`corpus`]: JSONL documents, vocabulary, pretrained vectors
//! - [`rouge`]: ROUGE-1/2/L with length limits
//! - [`oracle`]: greedy extractive labels from reference summaries
//! - [`model`]: the hierarchical GRU encoder and six-term scorer
//! - [`training`]: losses, decoder, clipping, adadelta, the training loop
//! - [`evaluation`]: selection policies, baselines, corpus ROUGE
//! - [`checkpoint`]: versioned model files

pub mod checkpoint;
pub mod corpus;
pub mod diffcore;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod oracle;
pub mod rouge;
pub mod training;

pub use error::{Error, Result};
