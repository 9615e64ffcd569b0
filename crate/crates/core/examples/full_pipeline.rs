//! Run both stages over a JSONL corpus with mock backends.
//!
//! cargo run --example full_pipeline -- [input.jsonl] [output.jsonl] [budget]

use std::path::PathBuf;

use cotprune::{Backends, Pipeline, PipelineConfig, RunOptions, Stages};

fn main() {
    let mut args = std::env::args().skip(1);
    let input = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/fixtures/corpus20.jsonl"
        ))
    });
    let output = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cotprune-full.jsonl"));
    let budget = args.next().and_then(|b| b.parse().ok()).unwrap_or(60);

    let cfg = PipelineConfig {
        mock: true,
        budget,
        ..Default::default()
    };
    let pipeline = Pipeline::new(cfg, Backends::mock(0)).expect("config");
    let summary = pipeline
        .run(&RunOptions::new(&input, &output, Stages::Both))
        .expect("run");
    let r = &summary.report;
    println!("wrote {}", output.display());
    println!(
        "{} samples: {} ok, {} fallback, {} failed",
        r.samples_total, r.stage2_ok, r.stage1_fallback, r.failed
    );
    println!(
        "tokens {} -> {} -> {} ({:.1}% fewer)",
        r.tokens_before, r.tokens_after_stage1, r.tokens_after_stage2, r.reduction_pct
    );
    println!("exit code would be {}", summary.exit_code());
}
