//! Run the anchor stage on one sample with the mock generator.
//!
//! cargo run --example anchor_stage

use cotprune::{coarse_prune, MockGenerator, PromptSet, Sample, Stage1Config};

fn main() {
    let sample = Sample::new(
        "is_even",
        "Write a function is_even(n) that returns True for even n.",
        "We need to test parity.\n\n\
         Wait, should zero count? Yes, zero is even.\n\n\
         n % 2 == 0 is True exactly for even n.\n\n\
         Negative numbers also work with % in Python.\n\n\
         So return n % 2 == 0.",
        "def is_even(n):\n    return n % 2 == 0",
    );
    let generator = MockGenerator::new(3);
    let out = coarse_prune(
        sample,
        &Stage1Config::default(),
        &generator,
        &PromptSet::bundled(),
    )
    .expect("stage 1");
    println!("status: {}", out.status.as_str());
    println!("retries used: {}", out.retries_used);
    println!("generator calls: {}", generator.calls());
    println!("coarse:\n{}", out.cot_coarse.unwrap_or_default());
}
