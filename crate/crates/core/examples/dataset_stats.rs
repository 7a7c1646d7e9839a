//! Corpus length statistics and the chunked-inference run estimate.
//!
//!     cargo run --example dataset_stats

use koti::dataset::{builtin_task, chunk_runs, compute_stats, generate_synthetic, SyntheticSpec};
use koti::scorer::toy::{ToyConfig, ToyScorer};

fn main() -> koti::Result<()> {
    for (tokens, limit) in [(1568, 512), (512, 512), (513, 512)] {
        println!(
            "{tokens} tokens in {limit}-token chunks -> {} runs",
            chunk_runs(tokens, limit)
        );
    }

    let task = builtin_task("dys", false)?;
    let scorer = ToyScorer::new(&task, ToyConfig::default())?;
    for note_tokens in [300, 800, 1500] {
        let notes = generate_synthetic(&SyntheticSpec::for_task(
            &task,
            &[10, 10, 10],
            note_tokens,
            100,
            5,
        )?)?;
        let s = compute_stats(&notes, &task, &scorer, 512)?;
        println!(
            "{note_tokens:>5}-token notes: mean {:.1} sd {:.1}, {:.0}% over 512, {:.2} runs/note, keyword hits {:.0}%",
            s.mean_tokens,
            s.sd_tokens,
            100.0 * s.proportion_over_limit,
            s.mean_chunk_runs,
            100.0 * s.keyword_hit_rate
        );
    }
    Ok(())
}
