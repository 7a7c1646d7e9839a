//! Label-word resolution and the softmax verbalizer.
//!
//!     cargo run --example verbalizer

use koti::dataset::builtin_task;
use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::scorer::Scorer;
use koti::verbalizer::resolve_label_words;
use koti::{build_prompt, predict, Method, Note};

fn main() -> koti::Result<()> {
    let p = predict(&[2.0, 1.0])?;
    println!("softmax([2, 1]) = {:.4?}", p.probabilities);

    let task = builtin_task("smk", false)?;
    let scorer = ToyScorer::new(&task, ToyConfig::default())?;
    let words = resolve_label_words(&task, &scorer)?;
    println!("smk label words: {words:?}");

    for text in [
        "Social history: current smoker, one pack daily.",
        "Social history: denies smoking.",
        "Social history: lives alone, works as a teacher.",
    ] {
        let prompt = build_prompt(Method::Koti, &Note::new("n", text), &task, &scorer)?;
        let pred = predict(&scorer.score(&prompt, &words)?)?;
        let probs: Vec<String> = pred
            .probabilities
            .iter()
            .map(|p| format!("{p:.3}"))
            .collect();
        println!(
            "{:<10} [{}]  {text}",
            task.classes[pred.class_index],
            probs.join(", ")
        );
    }
    Ok(())
}
