//! Trim a scored chain of thought to a token budget.
//!
//! cargo run --example budget_refine -- 20

use cotprune::{fine_prune, join_steps, removal_order, score_steps, split_steps};
use cotprune::{MockScorer, ReferenceTokenizer, Tokenizer};

fn main() {
    let budget: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(20);
    let question = "Count the vowels in a string.";
    let coarse = split_steps(
        "Vowels are a, e, i, o and u.\n\n\
         Lowercase the string first so case does not matter.\n\n\
         Walk the characters and count those in the vowel set.\n\n\
         Return the count.",
    );
    let tok = ReferenceTokenizer;
    let scored = score_steps(question, &coarse, &MockScorer::new(1), "mock").expect("scoring");
    println!(
        "before: {} tokens, budget {budget}",
        tok.count(&join_steps(&coarse))
    );
    println!("removal order: {:?}", removal_order(&scored));
    let r = fine_prune(&scored, budget, &tok).expect("refine");
    println!(
        "removed {:?}, budget violation: {}",
        r.removed, r.budget_violation
    );
    println!(
        "after: {} tokens\n{}",
        tok.count(&join_steps(&r.steps)),
        join_steps(&r.steps)
    );
}
