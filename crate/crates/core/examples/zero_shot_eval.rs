//! Zero-shot comparison of the three insertion methods on a synthetic corpus
//! whose evidence sits 600 tokens into 1000-token notes.
//!
//!     cargo run --release --example zero_shot_eval

use koti::dataset::{builtin_task, generate_synthetic, SyntheticSpec, DYS_TRAIN_COUNTS};
use koti::eval::{evaluate, EvalOptions, SamplingPlan};
use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::scorer::HyperParams;
use koti::Method;

fn main() -> koti::Result<()> {
    let task = builtin_task("dys", false)?;
    let spec =
        SyntheticSpec::for_task(&task, &DYS_TRAIN_COUNTS, 1000, 600, 42)?.with_distractors(0.3);
    let notes = generate_synthetic(&spec)?;
    let mut scorer = ToyScorer::new(
        &task,
        ToyConfig {
            max_input_tokens: 504,
            ..ToyConfig::default()
        },
    )?;

    for method in Method::ALL {
        let report = evaluate(
            &task,
            &notes,
            method,
            &mut scorer,
            &SamplingPlan::zero_shot(0).with_runs(1),
            &HyperParams::default(),
            &EvalOptions::default(),
        )?;
        let f1: Vec<String> = report
            .summary
            .per_class
            .iter()
            .map(|c| format!("{}={:.3}", c.class, c.f1))
            .collect();
        println!(
            "{method:<6} macro-F1 {:.4}  ({})  fallback {:.2}",
            report.summary.mean.unwrap_or(f64::NAN),
            f1.join(" "),
            report.fallback_rate
        );
    }
    Ok(())
}
