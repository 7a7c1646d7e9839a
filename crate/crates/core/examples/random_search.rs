//! Random search over learning rate, batch size and epochs.
//!
//!     cargo run --release --example random_search

use koti::dataset::{builtin_task, generate_synthetic, SyntheticSpec};
use koti::eval::{random_search, EvalOptions, SamplingPlan};
use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::Method;

fn main() -> koti::Result<()> {
    let task = builtin_task("dys", false)?;
    let notes = generate_synthetic(
        &SyntheticSpec::for_task(&task, &[20, 20, 20], 400, 150, 3)?.with_distractors(0.3),
    )?;
    let mut scorer = ToyScorer::new(&task, ToyConfig::default())?;
    let plan = SamplingPlan::balanced(2, 0).with_runs(3);

    let search = random_search(
        &task,
        &notes,
        Method::Koti,
        &mut scorer,
        &plan,
        8,
        99,
        &EvalOptions::default(),
    )?;
    for (i, t) in search.trials.iter().enumerate() {
        let hp = &t.hyper_params;
        println!(
            "{i}: lr {:.2e} batch {} epochs {:>2} -> {:.4}{}",
            hp.learning_rate,
            hp.batch_size,
            hp.epochs,
            t.mean.unwrap_or(f64::NAN),
            if i == search.best_index { "  best" } else { "" }
        );
    }
    Ok(())
}
