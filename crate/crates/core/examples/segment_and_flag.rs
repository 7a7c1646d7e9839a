//! Sentence segmentation, keyword flagging and the split point KOTI uses.
//!
//!     cargo run --example segment_and_flag

use koti::text::{flag_sentences, segment_sentences, split_at_first_flagged};
use koti::KeywordSet;

fn main() -> koti::Result<()> {
    let note = "Follow-up visit. Vitals stable; weight unchanged.\n\
                Patient reports severe cramps during menses! Plan: NSAIDs. No menstrual pain last year?";
    let keywords = KeywordSet::new(["dysmenorrhea", "cramps", "menstrual pain", "period pain"])?;

    let spans = segment_sentences(note);
    for span in flag_sentences(note, &spans, &keywords) {
        let mark = if span.flagged { "*" } else { " " };
        println!(
            "{mark} [{:>3}..{:>3}] {}",
            span.start,
            span.end,
            span.slice(note)
        );
    }

    match split_at_first_flagged(note, &keywords) {
        Some((a, b)) => println!(
            "\ntext_a ends: {:?}\ntext_b: {:?}",
            &a[a.len().saturating_sub(30)..],
            b
        ),
        None => println!("\nno keyword sentence"),
    }
    Ok(())
}
