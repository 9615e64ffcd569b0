//! Validate a pruned chain of thought against its original.
//!
//! cargo run --example pattern_match

use cotprune::{pattern_match, split_steps, DEFAULT_TAU};

fn main() {
    let origin = split_steps(
        "Read the list of words.\n\n\
         Hmm, maybe sorting helps? Actually no.\n\n\
         Take the first word as the prefix.\n\n\
         Shrink the prefix until every word starts with it.\n\n\
         Return the prefix.",
    );
    let good = split_steps(
        "Take the first word as the prefix.\n\n\
         Shrink the prefix until every word starts with it.\n\n\
         Return the prefix.",
    );
    let reordered = split_steps(
        "Return the prefix.\n\n\
         Take the first word as the prefix.",
    );
    for (name, coarse) in [("pruned", &good), ("reordered", &reordered)] {
        let out = pattern_match(&origin, coarse, DEFAULT_TAU);
        println!(
            "{name}: valid={} first_failure={:?}",
            out.valid, out.first_failure
        );
        for a in &out.alignment {
            println!(
                "  coarse {} -> origin {} ({:.3})",
                a.coarse_index, a.origin_index, a.score
            );
        }
    }
}
