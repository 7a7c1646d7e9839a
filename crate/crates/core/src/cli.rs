//! Command-line front end. The `koti` binary is a thin wrapper over [`run`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{
    compute_stats, generate_synthetic, load_dataset, load_task, write_jsonl, DatasetFormat,
    SyntheticSpec, DYS_TRAIN_COUNTS,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, random_search, BinaryMetric, EvalOptions, SamplingMode, SamplingPlan};
use crate::prompt::{build_prompt, Method};
use crate::scorer::remote::RemoteScorer;
use crate::scorer::toy::{ToyConfig, ToyScorer};
use crate::scorer::{HyperParams, Scorer};
use crate::text::Note;
use crate::verbalizer::TaskConfig;

#[derive(Debug, Parser)]
#[command(
    name = "koti",
    version,
    about = "Template insertion and evaluation for long clinical notes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Show the exact model input for one note.
    Build(BuildArgs),
    /// Run an evaluation plan and write a JSON report.
    Eval(EvalArgs),
    /// Random search over learning rate, batch size and epochs.
    Tune(TuneArgs),
    /// Token-length statistics and chunked-inference run estimates.
    Stats(StatsArgs),
    /// Write a synthetic labeled corpus as JSONL.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TaskArgs {
    /// Built-in task name (dys, oa, dep, pvd, smk) or a TOML/JSON config path.
    #[arg(long)]
    pub task: String,
    /// Use the keyword rows exactly as originally published.
    #[arg(long)]
    pub as_printed: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    /// `toy` or `worker:<command line>`.
    #[arg(long, default_value = "toy")]
    pub scorer: String,
    /// Toy scorer capacity including special tokens.
    #[arg(long, default_value_t = 512)]
    pub max_input: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub id: String,
    #[arg(long, default_value = "koti")]
    pub method: String,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    /// `balanced:<k>`, `random:<n>` or `zero-shot`.
    #[arg(long, default_value = "zero-shot")]
    pub plan: String,
    #[arg(long, default_value_t = SamplingPlan::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary metric for binary tasks: `positive` or `macro`.
    #[arg(long, default_value = "positive")]
    pub binary_metric: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, default_value = "koti")]
    pub method: String,
    #[arg(long, default_value_t = HyperParams::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = HyperParams::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = HyperParams::default().epochs)]
    pub epochs: usize,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, default_value = "koti")]
    pub method: String,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Chunk size for the inference-run estimate.
    #[arg(long, default_value_t = 512)]
    pub limit: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Notes per class, comma separated, in task class order.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1000)]
    pub note_tokens: usize,
    #[arg(long, default_value_t = 600)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.0)]
    pub distractor_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn task_of(args: &TaskArgs) -> Result<TaskConfig> {
    load_task(&args.task, args.as_printed)
}

fn dataset_of(args: &DataArgs) -> Result<Vec<Note>> {
    let format = match &args.format {
        Some(f) => DatasetFormat::from_str(f)?,
        None => DatasetFormat::from_path(&args.data).unwrap_or(DatasetFormat::Jsonl),
    };
    load_dataset(&args.data, format)
}

/// Returns the scorer and a description used in config fingerprints.
pub fn scorer_of(args: &ScorerArgs, task: &TaskConfig) -> Result<(Box<dyn Scorer>, String)> {
    if args.scorer == "toy" {
        let config = ToyConfig {
            max_input_tokens: args.max_input,
            ..ToyConfig::default()
        };
        let label = format!(
            "toy:{}",
            serde_json::to_string(&config).expect("plain struct")
        );
        return Ok((Box::new(ToyScorer::new(task, config)?), label));
    }
    if let Some(command) = args.scorer.strip_prefix("worker:") {
        let remote = RemoteScorer::spawn(command)?;
        let cap = remote.capacity();
        let label = format!(
            "worker:{command}:{}:{}:{}",
            cap.max_input_tokens, cap.special_overhead, cap.mask_token
        );
        return Ok((Box::new(remote), label));
    }
    Err(Error::InvalidConfig(format!(
        "scorer `{}` is not `toy` or `worker:<command>`",
        args.scorer
    )))
}

fn plan_of(args: &PlanArgs) -> Result<(SamplingPlan, EvalOptions)> {
    let mode = SamplingMode::from_str(&args.plan)?;
    if args.runs == 0 {
        return Err(Error::InvalidConfig("--runs must be at least 1".into()));
    }
    let plan = SamplingPlan {
        mode,
        runs: args.runs,
        seed: args.seed,
    };
    let options = EvalOptions {
        binary_metric: BinaryMetric::from_str(&args.binary_metric)?,
        scorer_label: String::new(),
    };
    Ok((plan, options))
}

fn write_output(path: Option<&Path>, body: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Build(args) => cmd_build(args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::Tune(args) => cmd_tune(args, out),
        Command::Stats(args) => cmd_stats(args, out),
        Command::Generate(args) => cmd_generate(args, out),
    }
}

pub fn cmd_build(args: BuildArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_of(&args.task)?;
    let method = Method::from_str(&args.method)?;
    let dataset = dataset_of(&args.data)?;
    let note = dataset
        .iter()
        .find(|n| n.id == args.id)
        .ok_or_else(|| Error::UnknownNoteId(args.id.clone()))?;
    let (scorer, _) = scorer_of(&args.scorer, &task)?;
    let prompt = build_prompt(method, note, &task, scorer.as_ref())?;
    let cap = scorer.capacity();

    writeln!(out, "note:        {}", note.id)?;
    writeln!(out, "method:      {method}")?;
    if prompt.fallback_used {
        writeln!(
            out,
            "!! FALLBACK: no keyword sentence found, template appended at the end (STI-S layout)"
        )?;
    }
    writeln!(
        out,
        "tokens:      {} (+{} special, limit {})",
        prompt.tokens.len(),
        cap.special_overhead,
        cap.max_input_tokens
    )?;
    writeln!(out, "mask index:  {}", prompt.mask_index)?;
    writeln!(
        out,
        "truncation:  budget {}, removed {} from head of text_a, {} from tail of text_b",
        prompt.truncation.budget,
        prompt.truncation.removed_head_a,
        prompt.truncation.removed_tail_b
    )?;
    let span = prompt.template_span.clone();
    let before = scorer.detokenize(&prompt.tokens[..span.start])?;
    let template = scorer.detokenize(&prompt.tokens[span.clone()])?;
    let after = scorer.detokenize(&prompt.tokens[span.end..])?;
    writeln!(out, "---")?;
    let mut rendered = String::new();
    for (i, part) in [before, format!(">>> {template} <<<"), after]
        .into_iter()
        .enumerate()
    {
        if part.is_empty() {
            continue;
        }
        if i > 0 && !rendered.is_empty() {
            rendered.push(' ');
        }
        rendered.push_str(&part);
    }
    writeln!(out, "{rendered}")?;
    Ok(())
}

pub fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_of(&args.task)?;
    let method = Method::from_str(&args.method)?;
    let dataset = dataset_of(&args.data)?;
    let (plan, mut options) = plan_of(&args.plan)?;
    let hp = HyperParams::new(args.lr, args.batch_size, args.epochs)?;
    let (mut scorer, label) = scorer_of(&args.scorer, &task)?;
    options.scorer_label = label;

    let report = evaluate(
        &task,
        &dataset,
        method,
        scorer.as_mut(),
        &plan,
        &hp,
        &options,
    )?;
    let body = to_json(&report);
    write_output(args.out.as_deref(), &body, out)?;
    if args.out.is_some() {
        let s = &report.summary;
        writeln!(
            out,
            "{} {} {}: {} = {} ± {} over {}/{} runs{}, fallback rate {:.3}",
            report.task,
            report.method,
            report.plan.mode,
            report.primary_metric,
            s.mean.map_or("n/a".to_string(), |m| format!("{m:.4}")),
            s.stderr.map_or("n/a".to_string(), |m| format!("{m:.4}")),
            s.completed_runs,
            report.runs.len(),
            if s.partial { " (partial)" } else { "" },
            report.fallback_rate
        )?;
    }
    Ok(())
}

pub fn cmd_tune(args: TuneArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_of(&args.task)?;
    let method = Method::from_str(&args.method)?;
    let dataset = dataset_of(&args.data)?;
    let (plan, mut options) = plan_of(&args.plan)?;
    let (mut scorer, label) = scorer_of(&args.scorer, &task)?;
    options.scorer_label = label;

    let search = random_search(
        &task,
        &dataset,
        method,
        scorer.as_mut(),
        &plan,
        args.trials,
        args.plan.seed,
        &options,
    )?;
    writeln!(
        out,
        "{:>5}  {:>10}  {:>5}  {:>6}  {:>8}  {:>8}  runs",
        "trial", "lr", "batch", "epochs", "mean", "stderr"
    )?;
    for (i, t) in search.trials.iter().enumerate() {
        writeln!(
            out,
            "{:>5}  {:>10.3e}  {:>5}  {:>6}  {:>8}  {:>8}  {}{}{}",
            i,
            t.hyper_params.learning_rate,
            t.hyper_params.batch_size,
            t.hyper_params.epochs,
            t.mean.map_or("n/a".into(), |m| format!("{m:.4}")),
            t.stderr.map_or("n/a".into(), |m| format!("{m:.4}")),
            t.completed_runs,
            if t.partial { " partial" } else { "" },
            if i == search.best_index {
                "  <- best"
            } else {
                ""
            },
        )?;
    }
    if let Some(path) = &args.out {
        fs::write(path, to_json(&search))?;
    }
    Ok(())
}

pub fn cmd_stats(args: StatsArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_of(&args.task)?;
    let dataset = dataset_of(&args.data)?;
    let (scorer, _) = scorer_of(&args.scorer, &task)?;
    let stats = compute_stats(&dataset, &task, scorer.as_ref(), args.limit)?;
    writeln!(
        out,
        "{:<10} {:>12} {:>10} {:>14} {:>16} {:>12}",
        "notes",
        "mean tokens",
        "SD (pop.)",
        format!("share > {}", stats.limit),
        "est. runs/note",
        "keyword hit"
    )?;
    writeln!(
        out,
        "{:<10} {:>12.1} {:>10.1} {:>14.3} {:>16.2} {:>12.3}",
        stats.notes,
        stats.mean_tokens,
        stats.sd_tokens,
        stats.proportion_over_limit,
        stats.mean_chunk_runs,
        stats.keyword_hit_rate
    )?;
    if let Some(path) = &args.out {
        fs::write(path, to_json(&stats))?;
    }
    Ok(())
}

pub fn cmd_generate(args: GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_of(&args.task)?;
    let counts = match args.counts {
        Some(c) => c,
        None if task.num_classes() == DYS_TRAIN_COUNTS.len() => DYS_TRAIN_COUNTS.to_vec(),
        None => {
            return Err(Error::InvalidSpec(format!(
                "--counts is required for task `{}` ({} classes)",
                task.name,
                task.num_classes()
            )))
        }
    };
    let spec = SyntheticSpec::for_task(&task, &counts, args.note_tokens, args.depth, args.seed)?
        .with_distractors(args.distractor_rate);
    let notes = generate_synthetic(&spec)?;
    match &args.out {
        Some(path) => write_jsonl(&notes, std::io::BufWriter::new(fs::File::create(path)?))?,
        None => write_jsonl(&notes, &mut *out)?,
    }
    Ok(())
}
