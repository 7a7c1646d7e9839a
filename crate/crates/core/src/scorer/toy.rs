//! Proximity-weighted linear scorer.
//!
//! Every note token contributes to the class logits with a weight that decays
//! with its distance from the mask:
//!
//! ```text
//! logit_c = b_c + sum_t w(t, c) * d(|pos(t) - mask|),   d(x) = 1 / (1 + x / tau)
//! ```
//!
//! A token is featurized together with its keyword cue: a token that starts a
//! task keyword is `Affirmed`, or `Negated` when a negation word occurs within
//! the preceding window. The untrained weights put `prior_strength` on
//! affirmed cues for the affirmative class and on negated cues for the negative
//! class. Training learns offsets on top of that prior, plus the biases, by
//! mini-batch gradient descent on cross-entropy.
//!
//! Template tokens are not evidence and are skipped when scoring.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_prompt, Capacity, HyperParams, Scorer, TrainExample};
use crate::error::{Error, Result};
use crate::prompt::PromptInput;
use crate::verbalizer::TaskConfig;

pub const MASK_TOKEN: &str = "[MASK]";

const NEGATORS: [&str; 4] = ["no", "denies", "without", "negative"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub max_input_tokens: usize,
    pub special_overhead: usize,
    /// Decay length scale `tau`.
    pub decay_tau: f64,
    /// How many preceding tokens are checked for a negation word.
    pub negation_window: usize,
    /// Untrained weight on keyword cues.
    pub prior_strength: f64,
    /// Untrained bias of the abstain class, so evidence-free notes go there.
    pub abstain_bias: f64,
    /// Multiplier applied to the learning rate. A prompt carries a few hundred
    /// decayed features, so one step moves a logit by roughly
    /// `lr * lr_scale * (1 + sum x^2)`; 10 keeps lr=1e-4 a firm but stable step.
    pub lr_scale: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            max_input_tokens: 512,
            special_overhead: 2,
            decay_tau: 32.0,
            negation_window: 3,
            prior_strength: 1.0,
            abstain_bias: 0.05,
            lr_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cue {
    Plain,
    Affirmed,
    Negated,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub token: String,
    pub cue: Cue,
}

/// Decay-weighted feature counts of one prompt, sorted by feature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector(pub Vec<(Feature, f64)>);

/// Trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub bias: Vec<f64>,
    /// Learned offsets on top of the keyword prior.
    pub weights: BTreeMap<Feature, Vec<f64>>,
}

impl ToyParams {
    pub fn weight_mut(&mut self, feature: &Feature) -> &mut Vec<f64> {
        let n = self.bias.len();
        self.weights
            .entry(feature.clone())
            .or_insert_with(|| vec![0.0; n])
    }

    fn is_finite(&self) -> bool {
        self.bias.iter().all(|b| b.is_finite())
            && self.weights.values().flatten().all(|w| w.is_finite())
    }
}

/// Gradient of the mean cross-entropy over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub bias: Vec<f64>,
    pub weights: BTreeMap<Feature, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ToyScorer {
    config: ToyConfig,
    word_re: Regex,
    label_tokens: Vec<String>,
    keyword_tokens: Vec<Vec<String>>,
    affirmative: usize,
    negative: usize,
    initial: ToyParams,
    params: ToyParams,
}

impl ToyScorer {
    pub fn new(task: &TaskConfig, config: ToyConfig) -> Result<Self> {
        if !(config.decay_tau > 0.0 && config.decay_tau.is_finite()) {
            return Err(Error::InvalidConfig("decay_tau must be positive".into()));
        }
        if config.max_input_tokens <= config.special_overhead {
            return Err(Error::InvalidConfig(
                "max_input_tokens must exceed special_overhead".into(),
            ));
        }
        let word_re = Regex::new(r"\[MASK\]|[\p{Alphabetic}\p{N}]+").expect("static pattern");
        let tokenize = |s: &str| -> Vec<String> { toy_tokens(&word_re, s) };

        let label_tokens = task
            .label_words
            .iter()
            .map(|w| {
                tokenize(w).into_iter().next().ok_or_else(|| {
                    Error::TokenizationFailure(format!("label word `{w}` has no tokens"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let keyword_tokens: Vec<Vec<String>> = task
            .keywords
            .patterns()
            .iter()
            .map(|k| tokenize(k))
            .filter(|t| !t.is_empty())
            .collect();

        let mut bias = vec![0.0; task.num_classes()];
        if let Some(a) = task.abstain {
            bias[a] = config.abstain_bias;
        }
        let initial = ToyParams {
            bias,
            weights: BTreeMap::new(),
        };
        Ok(Self {
            config,
            word_re,
            label_tokens,
            keyword_tokens,
            affirmative: task.affirmative,
            negative: task.negative,
            params: initial.clone(),
            initial,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ToyParams {
        &mut self.params
    }

    pub fn decay(&self, distance: usize) -> f64 {
        1.0 / (1.0 + distance as f64 / self.config.decay_tau)
    }

    fn keyword_at(&self, tokens: &[String], at: usize) -> bool {
        self.keyword_tokens.iter().any(|kw| {
            let Some((last, init)) = kw.split_last() else {
                return false;
            };
            if at + kw.len() > tokens.len() {
                return false;
            }
            init.iter().zip(&tokens[at..]).all(|(k, t)| k == t)
                && tokens[at + init.len()].starts_with(last.as_str())
        })
    }

    fn cue_at(&self, tokens: &[String], at: usize) -> Cue {
        if !self.keyword_at(tokens, at) {
            return Cue::Plain;
        }
        let from = at.saturating_sub(self.config.negation_window);
        if tokens[from..at]
            .iter()
            .any(|t| NEGATORS.contains(&t.as_str()))
        {
            Cue::Negated
        } else {
            Cue::Affirmed
        }
    }

    /// Decay-weighted features of every note token in `prompt`.
    pub fn featurize(&self, prompt: &PromptInput) -> FeatureVector {
        let mut acc: BTreeMap<Feature, f64> = BTreeMap::new();
        for (pos, token) in prompt.tokens.iter().enumerate() {
            if pos == prompt.mask_index || prompt.template_span.contains(&pos) {
                continue;
            }
            let feature = Feature {
                token: token.clone(),
                cue: self.cue_at(&prompt.tokens, pos),
            };
            *acc.entry(feature).or_insert(0.0) += self.decay(pos.abs_diff(prompt.mask_index));
        }
        FeatureVector(acc.into_iter().collect())
    }

    fn prior(&self, feature: &Feature, class: usize) -> f64 {
        match feature.cue {
            Cue::Affirmed if class == self.affirmative => self.config.prior_strength,
            Cue::Negated if class == self.negative => self.config.prior_strength,
            _ => 0.0,
        }
    }

    /// Class logits for a featurized prompt.
    pub fn class_logits(&self, features: &FeatureVector) -> Vec<f64> {
        (0..self.params.bias.len())
            .map(|c| {
                let mut logit = self.params.bias[c];
                for (feature, x) in &features.0 {
                    let learned = self.params.weights.get(feature).map_or(0.0, |w| w[c]);
                    logit += x * (self.prior(feature, c) + learned);
                }
                logit
            })
            .collect()
    }

    /// Mean cross-entropy of `batch`.
    pub fn batch_loss(&self, batch: &[(FeatureVector, usize)]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|(fv, gold)| {
                let logits = self.class_logits(fv);
                log_sum_exp(&logits) - logits[*gold]
            })
            .sum();
        total / batch.len() as f64
    }

    /// Analytic gradient of [`Self::batch_loss`].
    pub fn batch_gradient(&self, batch: &[(FeatureVector, usize)]) -> Gradient {
        let n = self.params.bias.len();
        let scale = 1.0 / batch.len() as f64;
        let mut grad = Gradient {
            bias: vec![0.0; n],
            weights: BTreeMap::new(),
        };
        for (fv, gold) in batch {
            let probs = crate::verbalizer::softmax(&self.class_logits(fv));
            let residual: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(c, p)| (p - if c == *gold { 1.0 } else { 0.0 }) * scale)
                .collect();
            for (g, r) in grad.bias.iter_mut().zip(&residual) {
                *g += r;
            }
            for (feature, x) in &fv.0 {
                let slot = grad
                    .weights
                    .entry(feature.clone())
                    .or_insert_with(|| vec![0.0; n]);
                for (g, r) in slot.iter_mut().zip(&residual) {
                    *g += x * r;
                }
            }
        }
        grad
    }

    fn apply(&mut self, grad: &Gradient, step: f64) {
        for (b, g) in self.params.bias.iter_mut().zip(&grad.bias) {
            *b -= step * g;
        }
        for (feature, g) in &grad.weights {
            let w = self.params.weight_mut(feature);
            for (wc, gc) in w.iter_mut().zip(g) {
                *wc -= step * gc;
            }
        }
    }

    fn class_of_label(&self, word: &str) -> Result<usize> {
        self.label_tokens
            .iter()
            .position(|t| t == word)
            .ok_or_else(|| Error::UnknownLabelWord(word.to_string()))
    }
}

fn toy_tokens(re: &Regex, text: &str) -> Vec<String> {
    re.find_iter(text)
        .map(|m| {
            let s = m.as_str();
            if s == MASK_TOKEN {
                s.to_string()
            } else {
                s.to_lowercase()
            }
        })
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Scorer for ToyScorer {
    fn capacity(&self) -> Capacity {
        Capacity {
            max_input_tokens: self.config.max_input_tokens,
            special_overhead: self.config.special_overhead,
            mask_token: MASK_TOKEN.to_string(),
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(toy_tokens(&self.word_re, text))
    }

    fn detokenize(&self, tokens: &[String]) -> Result<String> {
        Ok(tokens.join(" "))
    }

    fn score(&self, prompt: &PromptInput, label_words: &[String]) -> Result<Vec<f64>> {
        check_prompt(prompt, &self.capacity())?;
        let logits = self.class_logits(&self.featurize(prompt));
        label_words
            .iter()
            .map(|w| self.class_of_label(w).map(|c| logits[c]))
            .collect()
    }

    fn train(&mut self, examples: &[TrainExample], hp: &HyperParams, seed: u64) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::InvalidConfig("cannot train on zero examples".into()));
        }
        hp.validate()?;
        let cap = self.capacity();
        let n = self.params.bias.len();
        let data = examples
            .iter()
            .map(|ex| {
                check_prompt(&ex.prompt, &cap)?;
                if ex.gold >= n {
                    return Err(Error::InvalidConfig(format!(
                        "gold class {} out of range",
                        ex.gold
                    )));
                }
                Ok((self.featurize(&ex.prompt), ex.gold))
            })
            .collect::<Result<Vec<_>>>()?;

        let step = hp.learning_rate * self.config.lr_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..hp.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(hp.batch_size) {
                let batch: Vec<(FeatureVector, usize)> =
                    chunk.iter().map(|&i| data[i].clone()).collect();
                let grad = self.batch_gradient(&batch);
                self.apply(&grad, step);
                if !self.params.is_finite() {
                    return Err(Error::DivergenceDetected(format!(
                        "parameters became non-finite in epoch {} (lr {})",
                        epoch + 1,
                        hp.learning_rate
                    )));
                }
            }
        }
        let loss = self.batch_loss(&data);
        if !loss.is_finite() {
            return Err(Error::DivergenceDetected(format!(
                "final loss is {loss} (lr {})",
                hp.learning_rate
            )));
        }
        Ok(loss)
    }

    fn reset(&mut self) -> Result<()> {
        self.params = self.initial.clone();
        Ok(())
    }
}
