//! Interrupt a run and resume it from the journal.
//!
//! cargo run --example resume_run

use cotprune::{Backends, Pipeline, PipelineConfig, RunOptions, Stages};

fn pipeline() -> Pipeline {
    let cfg = PipelineConfig {
        mock: true,
        budget: 60,
        ..Default::default()
    };
    Pipeline::new(cfg, Backends::mock(0)).expect("config")
}

fn main() {
    let input = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus20.jsonl");
    let dir = std::env::temp_dir().join("cotprune-resume");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let output = dir.join("out.jsonl");

    let crashed = pipeline()
        .run(&RunOptions {
            halt_after: Some(8),
            ..RunOptions::new(input, &output, Stages::Both)
        })
        .expect("first run");
    println!(
        "first run stopped after {} samples (halted: {})",
        crashed.processed, crashed.halted
    );

    let resumed = pipeline()
        .run(&RunOptions {
            resume: true,
            ..RunOptions::new(input, &output, Stages::Both)
        })
        .expect("resume");
    println!(
        "resumed at sample {}, processed {} more, report at {}",
        resumed.resumed_from,
        resumed.processed,
        resumed.report_path.unwrap().display()
    );
}
