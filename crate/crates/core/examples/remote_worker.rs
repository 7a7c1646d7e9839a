//! Talking to an out-of-process model worker over JSON lines.
//!
//!     cargo run --example remote_worker -- 'python -m my_worker --model some/clinical-mlm'
//!
//! Without an argument a tiny shell stand-in is launched that answers every
//! request with fixed replies.

use koti::dataset::builtin_task;
use koti::scorer::remote::RemoteScorer;
use koti::scorer::Scorer;
use koti::verbalizer::resolve_label_words;
use koti::{build_prompt, predict, Method, Note};

const STAND_IN: &str = r#"while IFS= read -r l; do case "$l" in
  *'"op":"hello"'*) echo '{"ok":true,"max_input_tokens":128,"special_overhead":2,"mask_token":"[MASK]"}';;
  *'"op":"tokenize"'*'"text":"Yes"'*) echo '{"tokens":["yes"]}';;
  *'"op":"tokenize"'*'"text":"No"'*) echo '{"tokens":["no"]}';;
  *'"op":"tokenize"'*'[MASK]'*) echo '{"tokens":["pvd",":","[MASK]"]}';;
  *'"op":"tokenize"'*) echo '{"tokens":["arterial","disease","noted","."]}';;
  *'"op":"detokenize"'*) echo '{"text":"arterial disease noted . pvd : [MASK]"}';;
  *'"op":"score"'*) echo '{"logits":[1.5,-0.5]}';;
  *'"op":"reset"'*) echo '{"ok":true}';;
  *) echo '{"error":"UnknownOp","message":"unsupported"}';;
esac; done"#;

fn main() -> koti::Result<()> {
    let command = std::env::args()
        .nth(1)
        .unwrap_or_else(|| STAND_IN.to_string());
    let scorer = RemoteScorer::spawn(&command)?;
    let cap = scorer.capacity();
    println!(
        "worker ready: {} tokens, overhead {}, mask {:?}",
        cap.max_input_tokens, cap.special_overhead, cap.mask_token
    );

    let task = builtin_task("pvd", false)?;
    let words = resolve_label_words(&task, &scorer)?;
    let prompt = build_prompt(
        Method::Koti,
        &Note::new("n", "Arterial disease noted."),
        &task,
        &scorer,
    )?;
    println!("prompt: {}", scorer.detokenize(&prompt.tokens)?);
    let pred = predict(&scorer.score(&prompt, &words)?)?;
    println!(
        "-> {} {:.3?}",
        task.classes[pred.class_index], pred.probabilities
    );
    Ok(())
}
