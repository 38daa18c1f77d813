//! Phrase-level personalized dialogue decoding.
//!
//! A shared GRU decoder component carries phrases common to all users; a
//! small per-user RNN carries personal phrases (favorite orders, delivery
//! addresses); a binary control gate learned per word switches between them,
//! freezing the shared state while the personal component speaks. The crate
//! also provides the HRED and flat seq2seq encoder stacks the decoder plugs
//! into, REINFORCE training from logged trajectories, a rule-based
//! coffee-ordering user simulator for data generation and online evaluation,
//! and the offline metrics (BLEU-2, slot error rate).

pub mod adam;
pub mod checkpoint;
pub mod corpus;
pub mod decoder;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod param;
pub mod rng;
pub mod simulator;
pub mod tape;
pub mod templates;
pub mod tensor;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, ModelKind};
pub use tensor::{Tensor1, Tensor2};
