//! Defining a task in TOML instead of using a built-in one.
//!
//!     cargo run --example custom_task

use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::scorer::Scorer;
use koti::verbalizer::resolve_label_words;
use koti::{build_prompt, predict, Method, Note, TaskConfig};

const TASK: &str = r#"
name = "migraine"
classes = ["present", "absent"]
label_words = ["yes", "no"]
keywords = ["migraine", "aura", "photophobia"]

[template]
before_mask = "migraine:"
"#;

fn main() -> koti::Result<()> {
    let task = TaskConfig::from_toml_str(TASK, false)?;
    let scorer = ToyScorer::new(&task, ToyConfig::default())?;
    let words = resolve_label_words(&task, &scorer)?;
    println!(
        "roles: affirmative={} negative={} abstain={:?}",
        task.affirmative, task.negative, task.abstain
    );

    for text in [
        "Headache with visual aura since Monday.",
        "Denies photophobia. Sleeping well.",
    ] {
        let prompt = build_prompt(Method::Koti, &Note::new("n", text), &task, &scorer)?;
        let pred = predict(&scorer.score(&prompt, &words)?)?;
        println!(
            "{:<8} {:.3?}  {}",
            task.classes[pred.class_index],
            pred.probabilities,
            scorer.detokenize(&prompt.tokens)?
        );
    }
    Ok(())
}
