//! KOTI, STI-k and STI-s on a note longer than the model input.
//!
//!     cargo run --example insertion_methods

use koti::dataset::builtin_task;
use koti::scorer::toy::{ToyConfig, ToyScorer};
use koti::scorer::Scorer;
use koti::{build_prompt, Method, Note};

fn main() -> koti::Result<()> {
    let task = builtin_task("dys", false)?;
    // 40 note tokens + 2 template tokens + 2 special tokens.
    let scorer = ToyScorer::new(
        &task,
        ToyConfig {
            max_input_tokens: 44,
            ..ToyConfig::default()
        },
    )?;

    let filler = |n: usize, w: &str| vec![w; n].join(" ");
    let note = Note::new(
        "demo",
        format!(
            "{}. Patient reports cramps each cycle. {}.",
            filler(30, "before"),
            filler(30, "after")
        ),
    );

    for method in Method::ALL {
        let p = build_prompt(method, &note, &task, &scorer)?;
        let t = &p.truncation;
        println!(
            "{method:<6} mask at {:>2}, removed {:>2} head / {:>2} tail, fallback {}",
            p.mask_index, t.removed_head_a, t.removed_tail_b, p.fallback_used
        );
        println!("       {}", scorer.detokenize(&p.tokens)?);
    }

    // No keyword: KOTI and STI-k fall back to the STI-s layout.
    let plain = Note::new("plain", filler(60, "routine"));
    let p = build_prompt(Method::Koti, &plain, &task, &scorer)?;
    println!(
        "\nno keyword -> fallback_used = {}, mask at {}",
        p.fallback_used, p.mask_index
    );
    Ok(())
}
