//! Model-input construction for the three template insertion methods.
//!
//! All budgets are counted in the scorer's own token space. The template and
//! the model's special tokens are charged first; whatever remains is the note
//! budget.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Scorer;
use crate::text::{split_at_first_flagged, Note};
use crate::verbalizer::TaskConfig;

/// Template insertion method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Template inserted right after the first keyword sentence.
    #[serde(rename = "KOTI")]
    Koti,
    /// Same kept tokens as KOTI, template appended at the end.
    #[serde(rename = "STI-K")]
    StiK,
    /// Tail-truncated note, template appended at the end.
    #[serde(rename = "STI-S")]
    StiS,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Koti, Method::StiK, Method::StiS];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Koti => "KOTI",
            Method::StiK => "STI-K",
            Method::StiS => "STI-S",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "koti" => Ok(Method::Koti),
            "sti-k" | "sti_k" | "stik" => Ok(Method::StiK),
            "sti-s" | "sti_s" | "stis" => Ok(Method::StiS),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (expected koti, sti-k or sti-s)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TruncationRecord {
    /// Tokens dropped from the front of `text_a`.
    pub removed_head_a: usize,
    /// Tokens dropped from the end of `text_b`.
    pub removed_tail_b: usize,
    /// Note-token budget after template and special tokens.
    pub budget: usize,
}

/// A fully built model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInput {
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub method: Method,
    pub truncation: TruncationRecord,
    /// KOTI or STI-k fell back to STI-s because nothing was flagged.
    pub fallback_used: bool,
    /// Positions of the template tokens (mask included).
    pub template_span: Range<usize>,
}

impl PromptInput {
    /// The prompt with the template tokens removed.
    pub fn note_tokens(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.template_span.contains(i))
            .map(|(_, t)| t.as_str())
            .collect()
    }

    /// Length including the model's special tokens.
    pub fn model_length(&self, special_overhead: usize) -> usize {
        self.tokens.len() + special_overhead
    }
}

fn round_half_up_div(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Head-truncate `a` and tail-truncate `b` so together they fit `budget`,
/// removing tokens from each in proportion to its length.
pub fn proportional_truncate<'a, T>(
    a: &'a [T],
    b: &'a [T],
    budget: usize,
) -> (&'a [T], &'a [T], TruncationRecord) {
    let (len_a, len_b) = (a.len(), b.len());
    let total = len_a + len_b;
    if total <= budget {
        return (
            a,
            b,
            TruncationRecord {
                removed_head_a: 0,
                removed_tail_b: 0,
                budget,
            },
        );
    }
    let excess = total - budget;
    let share = round_half_up_div(excess * len_a, total);
    let removed_head_a = share.clamp(excess.saturating_sub(len_b), excess.min(len_a));
    let removed_tail_b = excess - removed_head_a;
    (
        &a[removed_head_a..],
        &b[..len_b - removed_tail_b],
        TruncationRecord {
            removed_head_a,
            removed_tail_b,
            budget,
        },
    )
}

struct Frame {
    template: Vec<String>,
    mask_offset: usize,
    budget: usize,
    mask_token: String,
}

fn frame<S: Scorer + ?Sized>(task: &TaskConfig, scorer: &S) -> Result<Frame> {
    let cap = scorer.capacity();
    let template = scorer.tokenize(&task.template.render(&cap.mask_token))?;
    let masks: Vec<usize> = template
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == cap.mask_token)
        .map(|(i, _)| i)
        .collect();
    if masks.len() != 1 {
        return Err(Error::InvalidTemplate(format!(
            "template for `{}` tokenizes to {} mask tokens",
            task.name,
            masks.len()
        )));
    }
    let reserved = cap.special_overhead + template.len();
    if cap.max_input_tokens <= reserved {
        return Err(Error::InvalidTemplate(format!(
            "scorer capacity {} leaves no room for note text after {} reserved tokens",
            cap.max_input_tokens, reserved
        )));
    }
    Ok(Frame {
        template,
        mask_offset: masks[0],
        budget: cap.max_input_tokens - reserved,
        mask_token: cap.mask_token,
    })
}

fn note_tokens<S: Scorer + ?Sized>(
    scorer: &S,
    text: &str,
    mask_token: &str,
) -> Result<Vec<String>> {
    let mut tokens = scorer.tokenize(text)?;
    // A literal mask token in the note would break the single-mask invariant.
    tokens.retain(|t| t != mask_token);
    Ok(tokens)
}

fn assemble(
    before: &[String],
    after: &[String],
    frame: &Frame,
    method: Method,
    truncation: TruncationRecord,
    fallback_used: bool,
) -> PromptInput {
    let mut tokens = Vec::with_capacity(before.len() + frame.template.len() + after.len());
    tokens.extend_from_slice(before);
    let start = tokens.len();
    tokens.extend_from_slice(&frame.template);
    let end = tokens.len();
    tokens.extend_from_slice(after);
    PromptInput {
        tokens,
        mask_index: start + frame.mask_offset,
        method,
        truncation,
        fallback_used,
        template_span: start..end,
    }
}

fn standard_chunk<S: Scorer + ?Sized>(
    note: &Note,
    scorer: &S,
    frame: &Frame,
    method: Method,
    fallback_used: bool,
) -> Result<PromptInput> {
    let tokens = note_tokens(scorer, &note.text, &frame.mask_token)?;
    let kept = tokens.len().min(frame.budget);
    let truncation = TruncationRecord {
        removed_head_a: 0,
        removed_tail_b: tokens.len() - kept,
        budget: frame.budget,
    };
    Ok(assemble(
        &tokens[..kept],
        &[],
        frame,
        method,
        truncation,
        fallback_used,
    ))
}

fn keyword_chunk<S: Scorer + ?Sized>(
    note: &Note,
    task: &TaskConfig,
    scorer: &S,
    frame: &Frame,
    method: Method,
) -> Result<PromptInput> {
    let Some((text_a, text_b)) = split_at_first_flagged(&note.text, &task.keywords) else {
        return standard_chunk(note, scorer, frame, method, true);
    };
    let tokens_a = note_tokens(scorer, text_a, &frame.mask_token)?;
    let tokens_b = note_tokens(scorer, text_b, &frame.mask_token)?;
    let (kept_a, kept_b, truncation) = proportional_truncate(&tokens_a, &tokens_b, frame.budget);
    Ok(match method {
        Method::Koti => assemble(kept_a, kept_b, frame, method, truncation, false),
        _ => {
            let joined: Vec<String> = kept_a.iter().chain(kept_b).cloned().collect();
            assemble(&joined, &[], frame, method, truncation, false)
        }
    })
}

/// KOTI: `trim(text_a) template trim(text_b)`, falling back to STI-s when no
/// sentence is flagged.
pub fn build_koti<S: Scorer + ?Sized>(
    note: &Note,
    task: &TaskConfig,
    scorer: &S,
) -> Result<PromptInput> {
    let frame = frame(task, scorer)?;
    keyword_chunk(note, task, scorer, &frame, Method::Koti)
}

/// STI-k: KOTI's kept tokens with the template appended.
pub fn build_sti_k<S: Scorer + ?Sized>(
    note: &Note,
    task: &TaskConfig,
    scorer: &S,
) -> Result<PromptInput> {
    let frame = frame(task, scorer)?;
    keyword_chunk(note, task, scorer, &frame, Method::StiK)
}

/// STI-s: the first `budget` note tokens with the template appended.
pub fn build_sti_s<S: Scorer + ?Sized>(
    note: &Note,
    task: &TaskConfig,
    scorer: &S,
) -> Result<PromptInput> {
    let frame = frame(task, scorer)?;
    standard_chunk(note, scorer, &frame, Method::StiS, false)
}

pub fn build_prompt<S: Scorer + ?Sized>(
    method: Method,
    note: &Note,
    task: &TaskConfig,
    scorer: &S,
) -> Result<PromptInput> {
    match method {
        Method::Koti => build_koti(note, task, scorer),
        Method::StiK => build_sti_k(note, task, scorer),
        Method::StiS => build_sti_s(note, task, scorer),
    }
}
