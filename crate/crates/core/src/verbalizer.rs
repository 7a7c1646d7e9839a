//! Task configuration and the manual verbalizer.
//!
//! Each class owns exactly one label word. At inference time the scorer
//! returns one logit per label word at the mask position and the verbalizer
//! turns those into a probability distribution over classes.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Scorer;
use crate::text::KeywordSet;

/// Prefix-style template `"<before> [MASK] <after>"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub before_mask: String,
    #[serde(default)]
    pub after_mask: String,
}

impl TemplateSpec {
    pub fn new(before_mask: impl Into<String>) -> Self {
        Self {
            before_mask: before_mask.into(),
            after_mask: String::new(),
        }
    }

    /// Render with the scorer's mask token in place.
    pub fn render(&self, mask_token: &str) -> String {
        let mut out = String::new();
        let before = self.before_mask.trim();
        if !before.is_empty() {
            out.push_str(before);
            out.push(' ');
        }
        out.push_str(mask_token);
        let after = self.after_mask.trim();
        if !after.is_empty() {
            out.push(' ');
            out.push_str(after);
        }
        out
    }
}

/// On-disk task description (TOML or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfigFile {
    pub name: String,
    pub classes: Vec<String>,
    pub template: TemplateSpec,
    pub label_words: Vec<String>,
    pub keywords: Vec<String>,
    /// Alternate keyword list selected by `--as-printed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords_as_printed: Option<Vec<String>>,
    /// Class an affirmative keyword mention points to. Defaults to the first class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affirmative: Option<String>,
    /// Class a negated keyword mention points to. Defaults to the class whose
    /// label word is `no`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<String>,
    /// Class predicted when a note carries no evidence at all. Defaults to the
    /// class whose label word is `unknown`, or the negative class for binary tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstain: Option<String>,
}

/// A validated classification task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub name: String,
    pub classes: Vec<String>,
    pub template: TemplateSpec,
    pub label_words: Vec<String>,
    pub keywords: KeywordSet,
    pub affirmative: usize,
    pub negative: usize,
    pub abstain: Option<usize>,
    source: TaskConfigFile,
}

impl TaskConfig {
    pub fn from_file(file: TaskConfigFile, as_printed: bool) -> Result<Self> {
        if file.name.trim().is_empty() {
            return Err(Error::InvalidConfig("task name is empty".into()));
        }
        if file.classes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "task `{}` needs at least two classes",
                file.name
            )));
        }
        if file.label_words.len() != file.classes.len() {
            return Err(Error::InvalidConfig(format!(
                "task `{}` has {} classes but {} label words",
                file.name,
                file.classes.len(),
                file.label_words.len()
            )));
        }
        if has_duplicates(&file.classes) {
            return Err(Error::InvalidConfig("class names are not unique".into()));
        }
        let lowered: Vec<String> = file
            .label_words
            .iter()
            .map(|w| w.trim().to_lowercase())
            .collect();
        if has_duplicates(&lowered) || lowered.iter().any(String::is_empty) {
            return Err(Error::InvalidConfig(
                "label words must be unique and non-empty".into(),
            ));
        }

        let keyword_list = match (&file.keywords_as_printed, as_printed) {
            (Some(printed), true) => printed,
            _ => &file.keywords,
        };
        let keywords = KeywordSet::new(keyword_list)?;

        let index_of = |role: &str, name: &Option<String>| -> Result<Option<usize>> {
            match name {
                None => Ok(None),
                Some(n) => file
                    .classes
                    .iter()
                    .position(|c| c == n)
                    .map(Some)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("{role} class `{n}` is not a task class"))
                    }),
            }
        };
        let by_word = |word: &str| lowered.iter().position(|w| w == word);

        let affirmative = index_of("affirmative", &file.affirmative)?.unwrap_or(0);
        let negative = match index_of("negative", &file.negative)? {
            Some(i) => i,
            None => by_word("no")
                .filter(|&i| i != affirmative)
                .unwrap_or(if affirmative == 0 { 1 } else { 0 }),
        };
        if negative == affirmative {
            return Err(Error::InvalidConfig(
                "affirmative and negative classes must differ".into(),
            ));
        }
        let abstain = match index_of("abstain", &file.abstain)? {
            Some(i) => Some(i),
            None => by_word("unknown").or((file.classes.len() == 2).then_some(negative)),
        };

        Ok(Self {
            name: file.name.clone(),
            classes: file.classes.clone(),
            template: file.template.clone(),
            label_words: file.label_words.clone(),
            keywords,
            affirmative,
            negative,
            abstain,
            source: file,
        })
    }

    pub fn from_toml_str(s: &str, as_printed: bool) -> Result<Self> {
        let file: TaskConfigFile =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(format!("task config: {e}")))?;
        Self::from_file(file, as_printed)
    }

    pub fn from_json_str(s: &str, as_printed: bool) -> Result<Self> {
        let file: TaskConfigFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("task config: {e}")))?;
        Self::from_file(file, as_printed)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// The file this task was built from.
    pub fn source(&self) -> &TaskConfigFile {
        &self.source
    }
}

fn has_duplicates(items: &[String]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, a)| items[..i].iter().any(|b| b == a))
}

/// Verbalizer output for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class_index: usize,
    pub probabilities: Vec<f64>,
}

/// Tokenize each label word with the scorer's tokenizer and keep its first
/// sub-token. Two classes landing on the same token is fatal.
pub fn resolve_label_words<S: Scorer + ?Sized>(
    task: &TaskConfig,
    scorer: &S,
) -> Result<Vec<String>> {
    let mut resolved: Vec<String> = Vec::with_capacity(task.label_words.len());
    for (i, word) in task.label_words.iter().enumerate() {
        let pieces = scorer.tokenize(word)?;
        let Some(first) = pieces.first() else {
            return Err(Error::TokenizationFailure(format!(
                "label word `{word}` produced no tokens"
            )));
        };
        if pieces.len() > 1 {
            warn!(
                "label word `{word}` splits into {} sub-tokens {:?}; scoring with `{first}` only",
                pieces.len(),
                pieces
            );
        }
        if let Some(j) = resolved.iter().position(|t| t == first) {
            return Err(Error::LabelWordCollision {
                first: task.label_words[j].clone(),
                second: task.label_words[i].clone(),
                token: first.clone(),
            });
        }
        resolved.push(first.clone());
    }
    Ok(resolved)
}

/// Max-shifted softmax over label-word logits. Ties go to the lowest index.
pub fn predict(logits: &[f64]) -> Result<Prediction> {
    if logits.is_empty() {
        return Err(Error::InvalidConfig("no logits to verbalize".into()));
    }
    if let Some((index, &value)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteLogit { index, value });
    }
    let probabilities = softmax(logits);
    let mut class_index = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > probabilities[class_index] {
            class_index = i;
        }
    }
    Ok(Prediction {
        class_index,
        probabilities,
    })
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptInput;
    use crate::scorer::{Capacity, HyperParams, TrainExample};

    struct PieceScorer;

    // Word-level tokenizer that splits `unknown` into WordPiece-style pieces.
    impl Scorer for PieceScorer {
        fn capacity(&self) -> Capacity {
            Capacity {
                max_input_tokens: 512,
                special_overhead: 2,
                mask_token: "[MASK]".into(),
            }
        }
        fn tokenize(&self, text: &str) -> Result<Vec<String>> {
            Ok(text
                .split_whitespace()
                .flat_map(|w| match w {
                    "unknown" => vec!["un".to_string(), "##known".to_string()],
                    other => vec![other.to_lowercase()],
                })
                .collect())
        }
        fn detokenize(&self, tokens: &[String]) -> Result<String> {
            Ok(tokens.join(" "))
        }
        fn score(&self, _: &PromptInput, words: &[String]) -> Result<Vec<f64>> {
            Ok(vec![0.0; words.len()])
        }
        fn train(&mut self, _: &[TrainExample], _: &HyperParams, _: u64) -> Result<f64> {
            Ok(0.0)
        }
        fn reset(&mut self) -> Result<()> {
            Ok(())
        }
    }

    fn task(words: &[&str]) -> TaskConfig {
        let classes: Vec<String> = (0..words.len()).map(|i| format!("c{i}")).collect();
        TaskConfig::from_file(
            TaskConfigFile {
                name: "t".into(),
                classes,
                template: TemplateSpec::new("t:"),
                label_words: words.iter().map(|w| w.to_string()).collect(),
                keywords: vec!["x".into()],
                keywords_as_printed: None,
                affirmative: None,
                negative: None,
                abstain: None,
            },
            false,
        )
        .unwrap()
    }

    #[test]
    fn word_level_label_words_are_distinct() {
        let ids = resolve_label_words(&task(&["yes", "no", "maybe"]), &PieceScorer).unwrap();
        assert_eq!(ids, vec!["yes", "no", "maybe"]);
    }

    #[test]
    fn multi_piece_label_word_uses_first_piece() {
        let ids = resolve_label_words(&task(&["yes", "no", "unknown"]), &PieceScorer).unwrap();
        assert_eq!(ids[2], "un");
    }

    #[test]
    fn colliding_label_words_are_rejected() {
        // Distinct at the config level, identical once tokenized.
        let t = task(&["yes", "YES!"]);
        struct Lossy;
        impl Scorer for Lossy {
            fn capacity(&self) -> Capacity {
                PieceScorer.capacity()
            }
            fn tokenize(&self, text: &str) -> Result<Vec<String>> {
                Ok(vec![text.trim_end_matches('!').to_lowercase()])
            }
            fn detokenize(&self, t: &[String]) -> Result<String> {
                Ok(t.join(" "))
            }
            fn score(&self, _: &PromptInput, w: &[String]) -> Result<Vec<f64>> {
                Ok(vec![0.0; w.len()])
            }
            fn train(&mut self, _: &[TrainExample], _: &HyperParams, _: u64) -> Result<f64> {
                Ok(0.0)
            }
            fn reset(&mut self) -> Result<()> {
                Ok(())
            }
        }
        let err = resolve_label_words(&t, &Lossy).unwrap_err();
        assert_eq!(err.name(), "LabelWordCollision");
    }

    #[test]
    fn duplicate_label_words_rejected_at_config_time() {
        let file = TaskConfigFile {
            name: "t".into(),
            classes: vec!["a".into(), "b".into()],
            template: TemplateSpec::new("t:"),
            label_words: vec!["yes".into(), "yes".into()],
            keywords: vec!["x".into()],
            keywords_as_printed: None,
            affirmative: None,
            negative: None,
            abstain: None,
        };
        assert!(TaskConfig::from_file(file, false).is_err());
    }

    #[test]
    fn softmax_of_two_logits() {
        let p = predict(&[2.0, 1.0]).unwrap();
        assert!((p.probabilities[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((p.probabilities[1] - 0.2689414213699951).abs() < 1e-12);
        assert_eq!(p.class_index, 0);
    }

    #[test]
    fn constant_logits_tie_to_first_class() {
        for c in [-7.5, 0.0, 3.0, 1e6] {
            let p = predict(&[c, c, c]).unwrap();
            assert_eq!(p.class_index, 0);
            for prob in p.probabilities {
                assert!((prob - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = predict(&[0.0, 100.0]).unwrap();
        assert_eq!(p.class_index, 1);
        assert!(p.probabilities.iter().all(|v| v.is_finite()));
        assert!(p.probabilities[1] > 1.0 - 1e-12);
        assert!(p.probabilities[0] > 0.0 && p.probabilities[0] < 1e-40);
    }

    #[test]
    fn non_finite_logit_is_an_error() {
        assert!(matches!(
            predict(&[0.0, f64::NAN]),
            Err(Error::NonFiniteLogit { index: 1, .. })
        ));
        assert!(predict(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn template_rendering() {
        assert_eq!(
            TemplateSpec::new("dysmenorrhea:").render("[MASK]"),
            "dysmenorrhea: [MASK]"
        );
        let t = TemplateSpec {
            before_mask: "".into(),
            after_mask: "is the answer".into(),
        };
        assert_eq!(t.render("<mask>"), "<mask> is the answer");
    }

    #[test]
    fn role_defaults() {
        let t = task(&["yes", "no", "unknown"]);
        assert_eq!((t.affirmative, t.negative, t.abstain), (0, 1, Some(2)));
        let t = task(&["yes", "no"]);
        assert_eq!((t.affirmative, t.negative, t.abstain), (0, 1, Some(1)));
        let t = task(&["yes", "past", "no", "unknown"]);
        assert_eq!((t.affirmative, t.negative, t.abstain), (0, 2, Some(3)));
    }

    mod props {
        use super::super::predict;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shift_invariance(logits in prop::collection::vec(-50.0f64..50.0, 2..8), c in -100.0f64..100.0) {
                let a = predict(&logits).unwrap();
                let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
                let b = predict(&shifted).unwrap();
                prop_assert_eq!(a.class_index, b.class_index);
                for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }

            #[test]
            fn normalized_and_argmax(logits in prop::collection::vec(-50.0f64..50.0, 2..8)) {
                let p = predict(&logits).unwrap();
                let total: f64 = p.probabilities.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                prop_assert!(p.probabilities.iter().all(|&v| (0.0..=1.0).contains(&v)));
                let best = p.probabilities[p.class_index];
                prop_assert!(p.probabilities.iter().all(|&v| v <= best));
            }
        }
    }
}
