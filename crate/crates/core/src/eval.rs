//! Zero-shot and few-shot evaluation protocols.
//!
//! Each run resets the scorer, draws a training sample from the dataset with
//! seed `base + run`, fine-tunes on it (unless it is empty), and evaluates on
//! the remaining notes. Runs are aggregated into mean and standard error of
//! the primary metric: positive-class F1 for binary tasks, macro-F1 otherwise.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{ClassMetrics, ConfusionMatrix};
use crate::prompt::{build_prompt, Method, PromptInput};
use crate::scorer::{HyperParams, Scorer, TrainExample};
use crate::text::Note;
use crate::verbalizer::{predict, resolve_label_words, TaskConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// `k` training examples per class.
    Balanced { k: usize },
    /// `n` training examples drawn from the natural label distribution.
    Random { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    #[serde(flatten)]
    pub mode: SamplingMode,
    pub runs: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub const DEFAULT_RUNS: usize = 10;

    pub fn zero_shot(seed: u64) -> Self {
        Self::balanced(0, seed)
    }

    pub fn balanced(k: usize, seed: u64) -> Self {
        Self {
            mode: SamplingMode::Balanced { k },
            runs: Self::DEFAULT_RUNS,
            seed,
        }
    }

    pub fn random(n: usize, seed: u64) -> Self {
        Self {
            mode: SamplingMode::Random { n },
            runs: Self::DEFAULT_RUNS,
            seed,
        }
    }

    /// Random plan with the same number of examples as `balanced(k)`.
    pub fn matched_random(k: usize, num_classes: usize, seed: u64) -> Self {
        Self::random(k * num_classes, seed)
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn is_zero_shot(&self) -> bool {
        matches!(
            self.mode,
            SamplingMode::Balanced { k: 0 } | SamplingMode::Random { n: 0 }
        )
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingMode::Balanced { k: 0 } => write!(f, "zero-shot"),
            SamplingMode::Balanced { k } => write!(f, "balanced:{k}"),
            SamplingMode::Random { n } => write!(f, "random:{n}"),
        }
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    /// `balanced:<k>`, `random:<n>` or `zero-shot`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "zero-shot" || s == "zero_shot" {
            return Ok(SamplingMode::Balanced { k: 0 });
        }
        let bad =
            || Error::InvalidConfig(format!("plan `{s}` is not `balanced:<k>` or `random:<n>`"));
        let (kind, count) = s.split_once(':').ok_or_else(bad)?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "balanced" => Ok(SamplingMode::Balanced { k: count }),
            "random" => Ok(SamplingMode::Random { n: count }),
            _ => Err(bad()),
        }
    }
}

/// Indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

fn complement(len: usize, train: &[usize]) -> Vec<usize> {
    let mut taken = vec![false; len];
    for &i in train {
        taken[i] = true;
    }
    (0..len).filter(|&i| !taken[i]).collect()
}

/// Gold class index of every note.
pub fn gold_labels(dataset: &[Note], task: &TaskConfig) -> Result<Vec<usize>> {
    dataset
        .iter()
        .map(|note| {
            let label = note
                .label
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig(format!("note `{}` has no label", note.id)))?;
            task.class_index(label).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "note `{}` has label `{label}`, which is not a class of task `{}`",
                    note.id, task.name
                ))
            })
        })
        .collect()
}

/// Exactly `k` examples per class, without replacement.
pub fn sample_balanced(dataset: &[Note], task: &TaskConfig, k: usize, seed: u64) -> Result<Split> {
    let gold = gold_labels(dataset, task)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(k * task.num_classes());
    for (class, name) in task.classes.iter().enumerate() {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| gold[i] == class).collect();
        if members.len() < k {
            return Err(Error::InsufficientClassExamples {
                class: name.clone(),
                needed: k,
                available: members.len(),
            });
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..k]);
    }
    let eval = complement(dataset.len(), &train);
    Ok(Split { train, eval })
}

/// `n` examples drawn uniformly without replacement.
pub fn sample_random(dataset: &[Note], n: usize, seed: u64) -> Result<Split> {
    if n > dataset.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let train = order[..n].to_vec();
    let eval = complement(dataset.len(), &train);
    Ok(Split { train, eval })
}

pub fn sample(dataset: &[Note], task: &TaskConfig, mode: SamplingMode, seed: u64) -> Result<Split> {
    match mode {
        SamplingMode::Balanced { k } => sample_balanced(dataset, task, k, seed),
        SamplingMode::Random { n } => sample_random(dataset, n, seed),
    }
}

/// How binary tasks are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryMetric {
    /// F1 of the affirmative class.
    #[default]
    Positive,
    /// Macro-F1 over both classes.
    Macro,
}

impl FromStr for BinaryMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(BinaryMetric::Positive),
            "macro" => Ok(BinaryMetric::Macro),
            other => Err(Error::InvalidConfig(format!(
                "binary metric `{other}` is not `positive` or `macro`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalOptions {
    pub binary_metric: BinaryMetric,
    /// Free-form scorer description folded into the config fingerprint.
    pub scorer_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub primary_metric: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed(RunResult),
    /// Training failed; the run does not count towards the aggregate.
    Failed {
        error: String,
        message: String,
    },
    /// Nothing left to evaluate after sampling.
    Degenerate {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub train_size: usize,
    pub eval_size: usize,
    pub train_loss: Option<f64>,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn result(&self) -> Option<&RunResult> {
        match &self.outcome {
            RunOutcome::Completed(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Mean primary metric over completed runs; `None` if no run completed.
    pub mean: Option<f64>,
    /// Sample standard deviation over `sqrt(completed)`.
    pub stderr: Option<f64>,
    pub mean_macro_f1: Option<f64>,
    pub per_class: Vec<ClassSummary>,
    pub completed_runs: usize,
    /// Set when any run failed or was degenerate.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub classes: Vec<String>,
    pub method: Method,
    pub plan: SamplingPlan,
    pub hyper_params: HyperParams,
    pub binary_metric: BinaryMetric,
    pub primary_metric: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
    /// Share of notes whose prompt fell back to end-of-note insertion.
    pub fallback_rate: f64,
    pub config_fingerprint: String,
}

fn mean_and_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

fn fingerprint(
    task: &TaskConfig,
    dataset: &[Note],
    method: Method,
    plan: &SamplingPlan,
    hp: &HyperParams,
    options: &EvalOptions,
) -> String {
    let config = serde_json::json!({
        "task": task.source(),
        "method": method,
        "plan": plan,
        "hyper_params": hp,
        "options": options,
    });
    let mut hasher = Sha256::new();
    hasher.update(config.to_string().as_bytes());
    for note in dataset {
        for part in [
            note.id.as_str(),
            note.text.as_str(),
            note.label.as_deref().unwrap_or(""),
        ] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

fn run_metrics(
    task: &TaskConfig,
    confusion: ConfusionMatrix,
    binary: BinaryMetric,
) -> Result<RunResult> {
    let macro_f1 = confusion.macro_f1()?;
    let per_class = confusion.per_class();
    let primary_metric = if task.num_classes() == 2 && binary == BinaryMetric::Positive {
        per_class[task.affirmative].f1
    } else {
        macro_f1
    };
    Ok(RunResult {
        per_class,
        macro_f1,
        primary_metric,
        confusion,
    })
}

/// Run the sampling plan end to end.
pub fn evaluate<S: Scorer + ?Sized>(
    task: &TaskConfig,
    dataset: &[Note],
    method: Method,
    scorer: &mut S,
    plan: &SamplingPlan,
    hp: &HyperParams,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if plan.runs == 0 {
        return Err(Error::InvalidConfig("plan needs at least one run".into()));
    }
    hp.validate()?;
    let gold = gold_labels(dataset, task)?;
    let label_words = resolve_label_words(task, scorer)?;
    // Prompt construction only depends on the tokenizer, never on weights.
    let prompts: Vec<PromptInput> = dataset
        .iter()
        .map(|note| build_prompt(method, note, task, scorer))
        .collect::<Result<_>>()?;
    let fallback_rate = if prompts.is_empty() {
        0.0
    } else {
        prompts.iter().filter(|p| p.fallback_used).count() as f64 / prompts.len() as f64
    };

    let mut runs = Vec::with_capacity(plan.runs);
    for run in 0..plan.runs {
        let seed = plan.run_seed(run);
        scorer.reset()?;
        let split = sample(dataset, task, plan.mode, seed)?;
        let mut record = RunRecord {
            run,
            seed,
            train_size: split.train.len(),
            eval_size: split.eval.len(),
            train_loss: None,
            outcome: RunOutcome::Degenerate {
                reason: "empty evaluation set".into(),
            },
        };

        if !split.train.is_empty() {
            let examples: Vec<TrainExample> = split
                .train
                .iter()
                .map(|&i| TrainExample {
                    prompt: prompts[i].clone(),
                    gold: gold[i],
                })
                .collect();
            match scorer.train(&examples, hp, seed) {
                Ok(loss) => record.train_loss = Some(loss),
                Err(e @ Error::DivergenceDetected(_)) => {
                    record.outcome = RunOutcome::Failed {
                        error: e.name().to_string(),
                        message: e.to_string(),
                    };
                    runs.push(record);
                    continue;
                }
                Err(e) => return Err(e),
            }
        }

        if !split.eval.is_empty() {
            let mut confusion = ConfusionMatrix::new(task.num_classes());
            for &i in &split.eval {
                let logits = scorer.score(&prompts[i], &label_words)?;
                confusion.record(gold[i], predict(&logits)?.class_index);
            }
            record.outcome =
                RunOutcome::Completed(run_metrics(task, confusion, options.binary_metric)?);
        }
        runs.push(record);
    }

    let completed: Vec<&RunResult> = runs.iter().filter_map(RunRecord::result).collect();
    let primary: Vec<f64> = completed.iter().map(|r| r.primary_metric).collect();
    let macros: Vec<f64> = completed.iter().map(|r| r.macro_f1).collect();
    let (mean, stderr) = mean_and_stderr(&primary);
    let per_class = task
        .classes
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let avg = |f: fn(&ClassMetrics) -> f64| {
                if completed.is_empty() {
                    0.0
                } else {
                    completed.iter().map(|r| f(&r.per_class[c])).sum::<f64>()
                        / completed.len() as f64
                }
            };
            ClassSummary {
                class: name.clone(),
                precision: avg(|m| m.precision),
                recall: avg(|m| m.recall),
                f1: avg(|m| m.f1),
            }
        })
        .collect();

    let primary_metric =
        if task.num_classes() == 2 && options.binary_metric == BinaryMetric::Positive {
            format!("f1[{}]", task.classes[task.affirmative])
        } else {
            "macro_f1".to_string()
        };

    Ok(EvalReport {
        task: task.name.clone(),
        classes: task.classes.clone(),
        method,
        plan: *plan,
        hyper_params: *hp,
        binary_metric: options.binary_metric,
        primary_metric,
        seeds: (0..plan.runs).map(|r| plan.run_seed(r)).collect(),
        summary: Summary {
            mean,
            stderr,
            mean_macro_f1: mean_and_stderr(&macros).0,
            per_class,
            completed_runs: completed.len(),
            partial: completed.len() < runs.len(),
        },
        runs,
        fallback_rate,
        config_fingerprint: fingerprint(task, dataset, method, plan, hp, options),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub hyper_params: HyperParams,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub completed_runs: usize,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub trials: Vec<Trial>,
    pub best_index: usize,
    pub best: HyperParams,
}

/// Draw one point of the search space: lr ~ U[1e-7, 1e-4], batch in {1,2,4},
/// epochs in 1..=10.
pub fn draw_hyper_params<R: Rng + ?Sized>(rng: &mut R) -> HyperParams {
    let learning_rate =
        rng.random_range(HyperParams::MIN_LEARNING_RATE..=HyperParams::MAX_LEARNING_RATE);
    let batch_size = *HyperParams::BATCH_SIZES.choose(rng).expect("non-empty");
    let epochs = rng.random_range(1..=HyperParams::MAX_EPOCHS);
    HyperParams {
        learning_rate,
        batch_size,
        epochs,
    }
}

fn rank(trial: &Trial) -> u8 {
    match (trial.mean.is_some(), trial.partial) {
        (true, false) => 2,
        (true, true) => 1,
        (false, _) => 0,
    }
}

/// Random search over learning rate, batch size and epochs.
///
/// Fully completed trials rank above partial ones; within a rank the highest
/// mean primary metric wins and ties go to the lower learning rate.
#[allow(clippy::too_many_arguments)]
pub fn random_search<S: Scorer + ?Sized>(
    task: &TaskConfig,
    dataset: &[Note],
    method: Method,
    scorer: &mut S,
    plan: &SamplingPlan,
    trials: usize,
    seed: u64,
    options: &EvalOptions,
) -> Result<SearchReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig(
            "random search needs at least one trial".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(trials);
    for _ in 0..trials {
        let hp = draw_hyper_params(&mut rng);
        let report = evaluate(task, dataset, method, scorer, plan, &hp, options)?;
        results.push(Trial {
            hyper_params: hp,
            mean: report.summary.mean,
            stderr: report.summary.stderr,
            completed_runs: report.summary.completed_runs,
            partial: report.summary.partial,
        });
    }

    let mut best = 0;
    for (i, t) in results.iter().enumerate().skip(1) {
        let b = &results[best];
        let better = match rank(t).cmp(&rank(b)) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                let (tm, bm) = (
                    t.mean.unwrap_or(f64::NEG_INFINITY),
                    b.mean.unwrap_or(f64::NEG_INFINITY),
                );
                tm > bm || (tm == bm && t.hyper_params.learning_rate < b.hyper_params.learning_rate)
            }
        };
        if better {
            best = i;
        }
    }
    if results[best].mean.is_none() {
        return Err(Error::DivergenceDetected(format!(
            "all {trials} trials failed to complete a run"
        )));
    }
    Ok(SearchReport {
        best: results[best].hyper_params,
        best_index: best,
        trials: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::builtin_task;
    use crate::prompt::PromptInput;
    use crate::scorer::Capacity;
    use std::cell::Cell;

    fn labeled(counts: &[(&str, usize)]) -> Vec<Note> {
        let mut out = Vec::new();
        for (label, n) in counts {
            for i in 0..*n {
                out.push(Note::labeled(
                    format!("{label}{i}"),
                    format!("note {i}"),
                    *label,
                ));
            }
        }
        out
    }

    fn two_class_task() -> TaskConfig {
        TaskConfig::from_toml_str(
            r#"
            name = "ab"
            classes = ["A", "B"]
            label_words = ["yes", "no"]
            keywords = ["marker"]
            [template]
            before_mask = "ab:"
            "#,
            false,
        )
        .unwrap()
    }

    #[test]
    fn balanced_one_per_class() {
        let data = labeled(&[("A", 3), ("B", 3)]);
        let split = sample_balanced(&data, &two_class_task(), 1, 5).unwrap();
        assert_eq!(split.train.len(), 2);
        assert_eq!(split.eval.len(), 4);
        let labels: Vec<_> = split
            .train
            .iter()
            .map(|&i| data[i].label.clone().unwrap())
            .collect();
        assert_eq!(labels, ["A", "B"]);
    }

    #[test]
    fn balanced_zero_is_zero_shot() {
        let data = labeled(&[("A", 3), ("B", 3)]);
        let split = sample_balanced(&data, &two_class_task(), 0, 5).unwrap();
        assert!(split.train.is_empty());
        assert_eq!(split.eval, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn balanced_needs_enough_examples() {
        let data = labeled(&[("A", 1), ("B", 5)]);
        match sample_balanced(&data, &two_class_task(), 2, 0) {
            Err(Error::InsufficientClassExamples { class, .. }) => assert_eq!(class, "A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_sample_bounds() {
        let data = labeled(&[("A", 3), ("B", 3)]);
        let all = sample_random(&data, 6, 1).unwrap();
        assert!(all.eval.is_empty());
        assert!(sample_random(&data, 0, 1).unwrap().train.is_empty());
        assert!(matches!(
            sample_random(&data, 7, 1),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn random_four_from_dys_shape_can_miss_minority() {
        // 34/52/64: expected Yes count in a draw of 4 is 4 * 34 / 150 ~ 0.91
        let data = labeled(&[("Yes", 34), ("No", 52), ("Unknown", 64)]);
        let mut zero = 0;
        let mut total = 0;
        for seed in 0..2000 {
            let split = sample_random(&data, 4, seed).unwrap();
            let yes = split
                .train
                .iter()
                .filter(|&&i| data[i].label.as_deref() == Some("Yes"))
                .count();
            total += yes;
            zero += usize::from(yes == 0);
        }
        let mean = total as f64 / 2000.0;
        assert!((mean - 4.0 * 34.0 / 150.0).abs() < 0.05, "mean {mean}");
        assert!(zero > 0);
    }

    #[test]
    fn plan_parsing() {
        assert_eq!(
            "balanced:4".parse::<SamplingMode>().unwrap(),
            SamplingMode::Balanced { k: 4 }
        );
        assert_eq!(
            "random:50".parse::<SamplingMode>().unwrap(),
            SamplingMode::Random { n: 50 }
        );
        assert_eq!(
            "zero-shot".parse::<SamplingMode>().unwrap(),
            SamplingMode::Balanced { k: 0 }
        );
        assert!("balanced".parse::<SamplingMode>().is_err());
        assert!("stratified:3".parse::<SamplingMode>().is_err());
        assert_eq!(
            SamplingPlan::matched_random(4, 3, 0).mode,
            SamplingMode::Random { n: 12 }
        );
    }

    #[test]
    fn stderr_conventions() {
        assert_eq!(mean_and_stderr(&[0.5]), (Some(0.5), Some(0.0)));
        let (m, s) = mean_and_stderr(&[0.0, 1.0]);
        assert_eq!(m, Some(0.5));
        // sample sd = sqrt(0.5), over sqrt(2)
        assert!((s.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[]), (None, None));
    }

    /// Predicts from the note text itself: "note" → class 0 unless the note
    /// ends in an odd digit. Counts training calls, optionally diverges.
    struct Oracle {
        trained: Cell<usize>,
        diverge_above: f64,
        perfect: bool,
    }

    impl Scorer for Oracle {
        fn capacity(&self) -> Capacity {
            Capacity {
                max_input_tokens: 64,
                special_overhead: 0,
                mask_token: "[MASK]".into(),
            }
        }
        fn tokenize(&self, text: &str) -> Result<Vec<String>> {
            Ok(text.split_whitespace().map(str::to_string).collect())
        }
        fn detokenize(&self, t: &[String]) -> Result<String> {
            Ok(t.join(" "))
        }
        fn score(&self, prompt: &PromptInput, words: &[String]) -> Result<Vec<f64>> {
            let class = if self.perfect {
                usize::from(prompt.tokens[0] == "B")
            } else {
                0
            };
            Ok((0..words.len())
                .map(|c| if c == class { 1.0 } else { 0.0 })
                .collect())
        }
        fn train(&mut self, _: &[TrainExample], hp: &HyperParams, _: u64) -> Result<f64> {
            self.trained.set(self.trained.get() + 1);
            if hp.learning_rate > self.diverge_above {
                Err(Error::DivergenceDetected("test".into()))
            } else {
                Ok(hp.learning_rate)
            }
        }
        fn reset(&mut self) -> Result<()> {
            Ok(())
        }
    }

    fn oracle(perfect: bool, diverge_above: f64) -> Oracle {
        Oracle {
            trained: Cell::new(0),
            diverge_above,
            perfect,
        }
    }

    fn ab_data() -> Vec<Note> {
        (0..8)
            .map(|i| {
                let label = if i % 2 == 0 { "A" } else { "B" };
                Note::labeled(format!("n{i}"), format!("{label} text"), label)
            })
            .collect()
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let task = two_class_task();
        let mut s = oracle(true, 1.0);
        for binary_metric in [BinaryMetric::Positive, BinaryMetric::Macro] {
            let opts = EvalOptions {
                binary_metric,
                ..Default::default()
            };
            let r = evaluate(
                &task,
                &ab_data(),
                Method::StiS,
                &mut s,
                &SamplingPlan::balanced(1, 0),
                &HyperParams::default(),
                &opts,
            )
            .unwrap();
            assert_eq!(r.summary.mean, Some(1.0));
            assert_eq!(r.summary.stderr, Some(0.0));
            assert!(r
                .summary
                .per_class
                .iter()
                .all(|c| c.f1 == 1.0 && c.precision == 1.0 && c.recall == 1.0));
        }
    }

    #[test]
    fn zero_shot_never_trains() {
        let task = two_class_task();
        let mut s = oracle(true, 1.0);
        for plan in [SamplingPlan::zero_shot(3), SamplingPlan::random(0, 3)] {
            let r = evaluate(
                &task,
                &ab_data(),
                Method::Koti,
                &mut s,
                &plan,
                &HyperParams::default(),
                &EvalOptions::default(),
            )
            .unwrap();
            assert_eq!(r.runs.len(), 10);
            assert!(r
                .runs
                .iter()
                .all(|run| run.train_size == 0 && run.train_loss.is_none()));
        }
        assert_eq!(s.trained.get(), 0);
    }

    #[test]
    fn few_shot_trains_once_per_run_with_distinct_seeds() {
        let task = two_class_task();
        let mut s = oracle(true, 1.0);
        let plan = SamplingPlan::balanced(1, 100);
        let r = evaluate(
            &task,
            &ab_data(),
            Method::Koti,
            &mut s,
            &plan,
            &HyperParams::default(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(s.trained.get(), 10);
        assert_eq!(r.seeds, (100..110).collect::<Vec<u64>>());
    }

    #[test]
    fn diverged_runs_are_reported() {
        let task = two_class_task();
        let mut s = oracle(true, 0.0);
        let r = evaluate(
            &task,
            &ab_data(),
            Method::StiS,
            &mut s,
            &SamplingPlan::balanced(1, 0).with_runs(3),
            &HyperParams::default(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(r.summary.partial);
        assert_eq!(r.summary.completed_runs, 0);
        assert_eq!(r.summary.mean, None);
        assert!(matches!(r.runs[0].outcome, RunOutcome::Failed { .. }));
    }

    #[test]
    fn full_sample_is_degenerate() {
        let task = two_class_task();
        let mut s = oracle(true, 1.0);
        let r = evaluate(
            &task,
            &ab_data(),
            Method::StiS,
            &mut s,
            &SamplingPlan::random(8, 0).with_runs(2),
            &HyperParams::default(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(r
            .runs
            .iter()
            .all(|run| matches!(run.outcome, RunOutcome::Degenerate { .. })));
        assert!(r.summary.partial);
    }

    #[test]
    fn search_with_one_trial_returns_its_draw() {
        let task = two_class_task();
        let mut s = oracle(true, 1.0);
        let plan = SamplingPlan::balanced(1, 0).with_runs(2);
        let r = random_search(
            &task,
            &ab_data(),
            Method::StiS,
            &mut s,
            &plan,
            1,
            9,
            &EvalOptions::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(r.best, draw_hyper_params(&mut rng));
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn diverging_trial_loses() {
        let task = two_class_task();
        let plan = SamplingPlan::balanced(1, 0).with_runs(2);
        // Seed with two draws on either side of the divergence threshold.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (draw_hyper_params(&mut rng), draw_hyper_params(&mut rng));
        let threshold = a.learning_rate.min(b.learning_rate);
        let mut s = oracle(false, threshold);
        let r = random_search(
            &task,
            &ab_data(),
            Method::StiS,
            &mut s,
            &plan,
            2,
            4,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.best.learning_rate, threshold);
        let loser = &r.trials[1 - r.best_index];
        assert_eq!(loser.completed_runs, 0);
    }

    #[test]
    fn ties_prefer_lower_learning_rate() {
        let task = two_class_task();
        let plan = SamplingPlan::balanced(1, 0).with_runs(1);
        let mut s = oracle(true, 1.0);
        let r = random_search(
            &task,
            &ab_data(),
            Method::StiS,
            &mut s,
            &plan,
            5,
            1,
            &EvalOptions::default(),
        )
        .unwrap();
        let min_lr = r
            .trials
            .iter()
            .map(|t| t.hyper_params.learning_rate)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.best.learning_rate, min_lr);
    }

    #[test]
    fn search_is_reproducible() {
        let task = builtin_task("dys", false).unwrap();
        let data = crate::dataset::generate_synthetic(
            &crate::dataset::SyntheticSpec::for_task(&task, &[4, 4, 4], 60, 20, 3).unwrap(),
        )
        .unwrap();
        let plan = SamplingPlan::balanced(1, 0).with_runs(2);
        let run = || {
            let mut s = crate::scorer::toy::ToyScorer::new(&task, Default::default()).unwrap();
            random_search(
                &task,
                &data,
                Method::Koti,
                &mut s,
                &plan,
                3,
                42,
                &EvalOptions::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn samplers_partition(a in 0usize..12, b in 0usize..12, k in 0usize..4, n in 0usize..24, seed in any::<u64>()) {
                let data = labeled(&[("A", a), ("B", b)]);
                let task = two_class_task();
                let check = |split: &Split| {
                    let mut all: Vec<usize> = split.train.iter().chain(&split.eval).copied().collect();
                    all.sort();
                    all == (0..data.len()).collect::<Vec<_>>()
                };
                if let Ok(split) = sample_balanced(&data, &task, k, seed) {
                    prop_assert!(check(&split));
                    for class in ["A", "B"] {
                        let c = split.train.iter().filter(|&&i| data[i].label.as_deref() == Some(class)).count();
                        prop_assert_eq!(c, k);
                    }
                } else {
                    prop_assert!(a < k || b < k);
                }
                if let Ok(split) = sample_random(&data, n, seed) {
                    prop_assert!(check(&split));
                    prop_assert_eq!(split.train.len(), n);
                    prop_assert_eq!(sample_random(&data, n, seed).unwrap(), split);
                } else {
                    prop_assert!(n > data.len());
                }
            }
        }
    }
}
