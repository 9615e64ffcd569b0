//! Compress one sample against OpenAI-compatible endpoints.
//!
//! COTPRUNE_API_KEY=... cargo run --example live_endpoint -- <gen-endpoint> [score-endpoint]
//!
//! The scoring endpoint must support echoed prompt logprobs on the
//! completions route. COTPRUNE_SCORE_API_KEY overrides the key for it.

use std::process::ExitCode;

use cotprune::{Pipeline, PipelineConfig, Sample, Stages, Status};

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let Some(gen) = args.next() else {
        eprintln!("usage: live_endpoint <gen-endpoint> [score-endpoint]");
        return ExitCode::from(1);
    };
    let score = args.next().unwrap_or_else(|| gen.clone());
    let cfg = PipelineConfig {
        gen_endpoint: Some(gen),
        score_endpoint: Some(score),
        budget: 256,
        ..Default::default()
    };
    let pipeline = match Pipeline::from_config(cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let sample = Sample::new(
        "fizzbuzz",
        "Write fizzbuzz(n) returning 'Fizz', 'Buzz', 'FizzBuzz' or str(n).",
        "Check divisibility by 15 first, since it covers both.\n\n\
         Hmm, could I check 3 and 5 separately and concatenate? That also works.\n\n\
         Then 3 gives Fizz and 5 gives Buzz.\n\n\
         Otherwise return str(n).",
        "def fizzbuzz(n):\n    if n % 15 == 0:\n        return 'FizzBuzz'\n    if n % 3 == 0:\n        return 'Fizz'\n    if n % 5 == 0:\n        return 'Buzz'\n    return str(n)",
    );
    match pipeline.process(sample, Stages::Both) {
        Ok(s) if s.status == Status::Failed => {
            eprintln!("sample failed: {}", s.error.unwrap_or_default());
            ExitCode::from(2)
        }
        Ok(s) => {
            println!("status: {}", s.status.as_str());
            println!("{}", s.cot_final.or(s.cot_coarse).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
