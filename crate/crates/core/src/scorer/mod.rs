//! Pluggable masked-LM scorers.
//!
//! A scorer owns its tokenizer: every budget in the prompt builder is counted
//! in the scorer's token space. Two implementations ship with the crate, the
//! deterministic [`toy::ToyScorer`] and [`remote::RemoteScorer`], which talks
//! to an out-of-process model worker over JSON lines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::PromptInput;

pub mod remote;
pub mod toy;

/// Model capacity reported at handshake time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacity {
    /// Maximum input length including special tokens.
    pub max_input_tokens: usize,
    /// Tokens the model adds itself (e.g. `[CLS]`/`[SEP]`).
    pub special_overhead: usize,
    pub mask_token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub prompt: PromptInput,
    pub gold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl HyperParams {
    pub const MIN_LEARNING_RATE: f64 = 1e-7;
    pub const MAX_LEARNING_RATE: f64 = 1e-4;
    pub const BATCH_SIZES: [usize; 3] = [1, 2, 4];
    pub const MAX_EPOCHS: usize = 10;

    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize) -> Result<Self> {
        let hp = Self {
            learning_rate,
            batch_size,
            epochs,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(Self::MIN_LEARNING_RATE..=Self::MAX_LEARNING_RATE).contains(&self.learning_rate) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} outside [1e-7, 1e-4]",
                self.learning_rate
            )));
        }
        if !Self::BATCH_SIZES.contains(&self.batch_size) {
            return Err(Error::InvalidConfig(format!(
                "batch size {} not in {{1, 2, 4}}",
                self.batch_size
            )));
        }
        if !(1..=Self::MAX_EPOCHS).contains(&self.epochs) {
            return Err(Error::InvalidConfig(format!(
                "epochs {} not in 1..=10",
                self.epochs
            )));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 2,
            epochs: 5,
        }
    }
}

/// Masked-LM contract.
///
/// `tokenize`, `detokenize` and `score` must not mutate model state. `train`
/// and `reset` take `&mut self`, so the borrow checker serializes them against
/// everything else.
pub trait Scorer {
    fn capacity(&self) -> Capacity;

    fn tokenize(&self, text: &str) -> Result<Vec<String>>;

    fn detokenize(&self, tokens: &[String]) -> Result<String>;

    /// One logit per entry of `label_words`, read at the prompt's mask.
    fn score(&self, prompt: &PromptInput, label_words: &[String]) -> Result<Vec<f64>>;

    /// Prompt-based fine-tuning; returns the final training loss.
    fn train(&mut self, examples: &[TrainExample], hp: &HyperParams, seed: u64) -> Result<f64>;

    /// Restore the post-handshake model state.
    fn reset(&mut self) -> Result<()>;
}

/// Shared precondition check for `score` implementations.
pub(crate) fn check_prompt(prompt: &PromptInput, cap: &Capacity) -> Result<()> {
    let len = prompt.model_length(cap.special_overhead);
    if len > cap.max_input_tokens {
        return Err(Error::InputTooLong {
            len,
            max: cap.max_input_tokens,
        });
    }
    let masks = prompt
        .tokens
        .iter()
        .filter(|t| **t == cap.mask_token)
        .count();
    if masks != 1 || prompt.tokens.get(prompt.mask_index) != Some(&cap.mask_token) {
        return Err(Error::InvalidTemplate(format!(
            "prompt must hold exactly one mask at index {} (found {masks})",
            prompt.mask_index
        )));
    }
    Ok(())
}
