//! Balanced versus random few-shot sampling at matched budgets, on a corpus
//! where one class is a 10% minority.
//!
//!     cargo run --release --example few_shot_sampling

use koti::dataset::{builtin_task, generate_synthetic, SyntheticSpec};
use koti::eval::{evaluate, EvalOptions, SamplingPlan};
use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::scorer::HyperParams;
use koti::Method;

fn main() -> koti::Result<()> {
    let task = builtin_task("dys", false)?;
    let notes = generate_synthetic(
        &SyntheticSpec::for_task(&task, &[15, 60, 75], 1000, 600, 7)?.with_distractors(0.3),
    )?;
    let mut scorer = ToyScorer::new(
        &task,
        ToyConfig {
            max_input_tokens: 504,
            ..ToyConfig::default()
        },
    )?;
    let hp = HyperParams::new(1e-4, 4, 5)?;
    let options = EvalOptions::default();

    println!(
        "{:<12} {:>10} {:>12} {:>8}",
        "plan", "macro-F1", "±stderr", "Yes F1"
    );
    for k in [1, 2, 4, 8] {
        for plan in [
            SamplingPlan::balanced(k, 11),
            SamplingPlan::matched_random(k, task.num_classes(), 11),
        ] {
            let r = evaluate(
                &task,
                &notes,
                Method::Koti,
                &mut scorer,
                &plan,
                &hp,
                &options,
            )?;
            println!(
                "{:<12} {:>10.4} {:>12.4} {:>8.3}",
                plan.mode.to_string(),
                r.summary.mean.unwrap_or(f64::NAN),
                r.summary.stderr.unwrap_or(f64::NAN),
                r.summary.per_class[task.affirmative].f1
            );
        }
    }
    Ok(())
}
