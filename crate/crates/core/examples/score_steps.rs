//! Score each step by the surprisal of its first token.
//!
//! cargo run --example score_steps

use cotprune::{score_steps, split_steps, MockScorer};

fn main() {
    let question = "Write a function that reverses a string.";
    let coarse = split_steps(
        "Slicing with a step of -1 reverses a sequence.\n\n\
         So s[::-1] is the answer.\n\n\
         Empty strings work too.",
    );
    let scorer = MockScorer::new(7).with_top_k(5);
    let scored = score_steps(question, &coarse, &scorer, "mock").expect("scoring");
    for s in &scored {
        println!(
            "step {} surprisal={:.3} entropy_top5={:.3} ppl={:.3}  {:?}",
            s.step_index,
            s.surprisal,
            s.entropy_topk.unwrap_or(f64::NAN),
            s.step_ppl.unwrap_or(f64::NAN),
            s.text
        );
    }
}
