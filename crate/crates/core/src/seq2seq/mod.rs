//! Sequence-to-sequence backbone interface and the built-in tiny
//! transformer. The pipeline is written against [`Seq2Seq`], so a heavier
//! pretrained backbone can slot in behind the same five operations.

mod tiny;

pub use tiny::{ModelConfig, TinyTransformer};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::corpus::{SentencePair, Utterance, Vocab};
use crate::rewards::DecodeOutcome;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss term weight must be finite, got {0}")]
    BadWeight(f64),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint declares backbone {found:?}; only \"tiny\" has a built-in implementation — an external backbone requires an adapter")]
    UnsupportedBackbone { found: String },
    #[error("checkpoint has {found} parameter matrices, model needs {expected}")]
    ParamCountMismatch { expected: usize, found: usize },
    #[error("checkpoint parameter {index} has shape {found:?}, model needs {expected:?}")]
    ParamShapeMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Which translation backbone a config or checkpoint names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackboneKind {
    Tiny,
    External { id: String },
}

impl BackboneKind {
    /// Parses `tiny` or `external:<id>`.
    pub fn parse(text: &str) -> Option<Self> {
        if text == "tiny" {
            Some(BackboneKind::Tiny)
        } else {
            text.strip_prefix("external:").and_then(|id| {
                let id = id.trim();
                (!id.is_empty()).then(|| BackboneKind::External { id: id.to_string() })
            })
        }
    }

    pub fn as_string(&self) -> String {
        match self {
            BackboneKind::Tiny => "tiny".into(),
            BackboneKind::External { id } => format!("external:{id}"),
        }
    }
}

/// One weighted likelihood term in a training step: plain supervision uses
/// weight 1/batch, a policy-gradient term uses reward/batch.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm<'a> {
    pub pair: &'a SentencePair,
    pub weight: f64,
}

/// What one optimizer step reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// The operations the training pipeline needs from a translation model.
pub trait Seq2Seq {
    fn vocab(&self) -> &Vocab;

    /// Mean over pairs of the summed token negative log-likelihood of the
    /// target (end-of-sequence token included). No parameter updates.
    fn nll_loss(&mut self, pairs: &[SentencePair]) -> Result<f64, ModelError>;

    /// Deterministic decoding: the argmax token at each step.
    fn greedy_decode(&self, source: &Utterance) -> Result<Utterance, ModelError>;

    /// Ancestral sampling at temperature 1 plus the greedy baseline, with
    /// the sample's per-token log-probabilities. Same seed, same sample.
    fn sample_decode(&self, source: &Utterance, seed: u64) -> Result<DecodeOutcome, ModelError>;

    /// One optimizer update on the weighted sum of per-pair NLL terms.
    fn train_step(&mut self, terms: &[LossTerm]) -> Result<StepStats, ModelError>;

    fn save(&self, path: &Path) -> Result<(), ModelError>;

    /// Replaces this model's state with a checkpoint previously written by
    /// [`Seq2Seq::save`] on the same backbone.
    fn restore(&mut self, path: &Path) -> Result<(), ModelError>;

    fn param_count(&self) -> usize;
}
