//! Flat and nested named entity recognition.
//!
//! - [`corpus`]: sentences, spans, CoNLL-style and nested file formats
//! - [`tagset`]: label inventories and routing
//! - [`codec`]: BIO encoding with repair, nested linearization
//! - [`encoder`] / [`precomputed`]: contextual token vectors
//! - [`heads`]: per-tagset softmax heads and the nested seq2seq head
//! - [`trainer`]: multi-corpus training with square-root sampling
//! - [`eval`]: span-based precision, recall and F1
//! - [`model`]: checkpoints and inference
//! - [`tokenize`]: rule-based plain-text tokenizer
//! - [`synthetic`]: generated corpora with pattern-determined entities

pub mod codec;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod model;
pub mod optim;
pub mod params;
pub mod precomputed;
pub mod synthetic;
pub mod tagset;
pub mod tokenize;
pub mod trainer;

pub use error::{Error, Result};
