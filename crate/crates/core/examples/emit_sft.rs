//! Turn pipeline output into fine-tuning records.
//!
//! cargo run --example emit_sft

use cotprune::pipeline::{load_corpus, sft_records, SftFormat};
use cotprune::{Backends, Pipeline, PipelineConfig, RunOptions, Stages};

fn main() {
    let input = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus20.jsonl");
    let output = std::env::temp_dir().join("cotprune-sft-source.jsonl");
    let cfg = PipelineConfig {
        mock: true,
        budget: 60,
        ..Default::default()
    };
    Pipeline::new(cfg, Backends::mock(0))
        .expect("config")
        .run(&RunOptions::new(input, &output, Stages::Both))
        .expect("run");

    let samples = load_corpus(&output, 0.0).expect("read output").samples;
    for format in [SftFormat::Plain, SftFormat::ThinkTags] {
        let records = sft_records(&samples, false, &*format.formatter());
        let first = &records[0];
        println!("{format:?}: {} records", records.len());
        println!("  prompt: {}", first.prompt);
        println!("  response:\n{}\n", first.response);
    }
}
