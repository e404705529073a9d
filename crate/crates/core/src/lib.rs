//! Unsupervised two-style text rewriting between a pair of styles (e.g.
//! informal/formal, negative/positive) without parallel data.
//!
//! The pieces, bottom to top:
//! - [`corpus`]: tokenization, data model, and the on-disk formats
//! - [`lexicon`]: polarity lexicon + antonym table for synthetic swap pairs
//! - [`nn`]: hand-rolled layers with explicit forward/backward, Adam
//! - [`classifier`]: convolutional style classifier (also the reward signal)
//! - [`metrics`]: corpus BLEU, style accuracy, harmonic-mean report card
//! - [`rewards`]: self-critical style/content rewards over decoded outputs
//! - [`seq2seq`]: tiny encoder-decoder transformer with greedy and sampled
//!   decoding
//! - [`pipeline`]: warm-up training, iterative back-translation with rewards,
//!   and offline training on quality-gated generated pairs
//!
//! [`toytask`] generates a marker-swap toy problem small enough to push
//! through the whole pipeline in tests and benchmarks.

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod lexicon;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rewards;
pub mod seq2seq;
pub mod toytask;

pub use corpus::{
    Dataset, DatasetItems, LabeledUtterance, ReferenceSet, SentencePair, Split, StyleId,
    StylePair, Tokenizer, Utterance,
};
pub use lexicon::{AntonymMap, PolarityLexicon};
