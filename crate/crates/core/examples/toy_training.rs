//! Few-shot fine-tuning of the toy scorer, and resetting it between runs.
//!
//!     cargo run --example toy_training

use koti::dataset::{builtin_task, generate_synthetic, SyntheticSpec};
use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::scorer::{HyperParams, Scorer, TrainExample};
use koti::{build_prompt, Method};

fn main() -> koti::Result<()> {
    let task = builtin_task("dys", false)?;
    let mut scorer = ToyScorer::new(&task, ToyConfig::default())?;
    let notes = generate_synthetic(&SyntheticSpec::for_task(&task, &[4, 4, 4], 300, 120, 1)?)?;

    let examples = notes
        .iter()
        .map(|n| {
            Ok(TrainExample {
                prompt: build_prompt(Method::Koti, n, &task, &scorer)?,
                gold: task
                    .class_index(n.label.as_deref().unwrap_or_default())
                    .expect("generated label"),
            })
        })
        .collect::<koti::Result<Vec<_>>>()?;

    let probe = &examples[0].prompt;
    let words = koti::verbalizer::resolve_label_words(&task, &scorer)?;
    let before = scorer.score(probe, &words)?;

    for epochs in [1, 3, 10] {
        scorer.reset()?;
        let loss = scorer.train(&examples, &HyperParams::new(1e-4, 2, epochs)?, 7)?;
        println!("epochs {epochs:>2}: mean training loss {loss:.4}");
    }
    let after = scorer.score(probe, &words)?;
    scorer.reset()?;
    println!(
        "logits before {before:.3?}\n       trained {after:.3?}\n       reset   {:.3?}",
        scorer.score(probe, &words)?
    );
    Ok(())
}
