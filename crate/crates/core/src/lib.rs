//! Prompt construction and evaluation for masked-LM classification of long
//! clinical notes.
//!
//! Notes are usually longer than the model input, so where the prompt
//! template goes and which tokens survive truncation both matter. Three
//! insertion methods are provided:
//!
//! * **KOTI** splits the note after its first keyword-bearing sentence,
//!   inserts the template there, and truncates both halves proportionally.
//! * **STI-k** keeps exactly the tokens KOTI keeps but appends the template.
//! * **STI-s** tail-truncates the note and appends the template.
//!
//! The [`eval`] module runs zero-shot and few-shot protocols against any
//! [`scorer::Scorer`]. [`scorer::toy::ToyScorer`] is a small trainable
//! model whose logits depend on distance to the mask, which makes template
//! position effects testable without a real encoder.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod prompt;
pub mod scorer;
pub mod text;
pub mod verbalizer;

pub use error::{Error, Result};
pub use prompt::{build_koti, build_prompt, build_sti_k, build_sti_s, Method, PromptInput};
pub use text::{KeywordSet, Note};
pub use verbalizer::{predict, Prediction, TaskConfig};
