//! Split a chain of thought into steps and join it back.
//!
//! cargo run --example segment_steps

use cotprune::segmenter::has_fence_split;
use cotprune::{join_steps, split_steps, ReferenceTokenizer, Tokenizer};

fn main() {
    let cot = "We need the sum of the digits of n.\n\n\n\
               Convert n to a string so each digit is a character.\n\n\
               ```python\ndef f(n):\n\n    return sum(int(c) for c in str(n))\n```\n\n\
               Negative numbers need abs() first.";
    let steps = split_steps(cot);
    for (i, s) in steps.iter().enumerate() {
        println!("step {i} ({} tokens): {s:?}", ReferenceTokenizer.count(s));
    }
    println!("fence split across steps: {}", has_fence_split(&steps));
    println!("normalized:\n{}", join_steps(&steps));
}
