//! Sentence segmentation and keyword flagging for clinical notes.
//!
//! Offsets are byte offsets into the UTF-8 note text, so every span can be
//! sliced directly out of the original string.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single clinical note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Note {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
        }
    }

    pub fn labeled(
        id: impl Into<String>,
        text: impl Into<String>,
        label: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: Some(label.into()),
        }
    }
}

/// A sentence inside a note, `[start, end)` in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub flagged: bool,
}

impl SentenceSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// Task keywords, matched case-insensitively as word-anchored prefixes.
///
/// A keyword matches when it starts at a word boundary; the end is left open,
/// so `cigar` matches `cigarette` and `osteo` matches `osteoporosis`. Words of a
/// multi-word keyword may be separated by any run of whitespace in the note.
#[derive(Debug, Clone)]
pub struct KeywordSet {
    patterns: Vec<String>,
    matcher: Regex,
}

impl KeywordSet {
    pub fn new<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lowered: Vec<String> = Vec::new();
        for p in patterns {
            let p = p.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
            if p.is_empty() {
                return Err(Error::InvalidConfig("empty keyword".into()));
            }
            let p = p.to_lowercase();
            if lowered.contains(&p) {
                return Err(Error::InvalidConfig(format!("duplicate keyword `{p}`")));
            }
            lowered.push(p);
        }
        if lowered.is_empty() {
            return Err(Error::InvalidConfig("keyword set is empty".into()));
        }

        let alternatives: Vec<String> = lowered
            .iter()
            .map(|p| {
                let body = p
                    .split(' ')
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+");
                let anchored = p
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_alphanumeric() || c == '_');
                if anchored {
                    format!(r"\b{body}")
                } else {
                    body
                }
            })
            .collect();
        let matcher = Regex::new(&format!("(?i)(?:{})", alternatives.join("|")))
            .map_err(|e| Error::InvalidConfig(format!("keyword pattern: {e}")))?;

        Ok(Self {
            patterns: lowered,
            matcher,
        })
    }

    /// Lowercased, whitespace-normalized patterns in insertion order.
    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn matches(&self, text: &str) -> bool {
        self.matcher.is_match(text)
    }
}

impl PartialEq for KeywordSet {
    fn eq(&self, other: &Self) -> bool {
        self.patterns == other.patterns
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';')
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<SentenceSpan>) {
    let fragment = &text[start..end];
    let lead = fragment.len() - fragment.trim_start().len();
    let trail = fragment.len() - fragment.trim_end().len();
    if lead + trail < fragment.len() {
        spans.push(SentenceSpan {
            start: start + lead,
            end: end - trail,
            flagged: false,
        });
    }
}

/// Split `text` into sentence spans.
///
/// Boundaries are a terminator (`.`, `!`, `?`, `;`) followed by whitespace,
/// and every newline. Whitespace-only fragments produce no span.
pub fn segment_sentences(text: &str) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '\n' {
            push_trimmed(text, start, i, &mut spans);
            start = i + 1;
        } else if is_terminator(c) {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    push_trimmed(text, start, end, &mut spans);
                    start = end;
                }
            }
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

/// Returns `spans` with `flagged` set on every span containing a keyword.
pub fn flag_sentences(
    text: &str,
    spans: &[SentenceSpan],
    keywords: &KeywordSet,
) -> Vec<SentenceSpan> {
    spans
        .iter()
        .map(|s| SentenceSpan {
            flagged: keywords.matches(s.slice(text)),
            ..*s
        })
        .collect()
}

/// Split the note right after its first keyword-bearing sentence.
///
/// `text_a` runs from the start of the note to the end of that sentence and
/// `text_b` holds everything after it, so `text_a + text_b == text`.
pub fn split_at_first_flagged<'a>(
    text: &'a str,
    keywords: &KeywordSet,
) -> Option<(&'a str, &'a str)> {
    segment_sentences(text)
        .into_iter()
        .find(|s| keywords.matches(s.slice(text)))
        .map(|s| text.split_at(s.end))
}
