//! Record a run against an endpoint, then replay it offline.
//!
//! cargo run --example replay_fixture -- record <endpoint> <fixture.json>
//! cargo run --example replay_fixture -- replay <fixture.json>
//!
//! Recording reads the key from COTPRUNE_API_KEY when the endpoint needs one.

use std::path::PathBuf;
use std::process::ExitCode;

use cotprune::{Pipeline, PipelineConfig, RunOptions, Stages};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let input = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus20.jsonl");
    let base = PipelineConfig {
        budget: 60,
        concurrency: 1,
        ..Default::default()
    };
    let (cfg, output) = match args.as_slice() {
        [mode, endpoint, fixture] if mode == "record" => (
            PipelineConfig {
                gen_endpoint: Some(endpoint.clone()),
                score_endpoint: Some(endpoint.clone()),
                record_fixture: Some(PathBuf::from(fixture)),
                ..base
            },
            "recorded.jsonl",
        ),
        [mode, fixture] if mode == "replay" => (
            PipelineConfig {
                replay_fixture: Some(PathBuf::from(fixture)),
                ..base
            },
            "replayed.jsonl",
        ),
        _ => {
            eprintln!("usage: replay_fixture record <endpoint> <fixture> | replay <fixture>");
            return ExitCode::from(1);
        }
    };
    let output = std::env::temp_dir().join(output);
    match Pipeline::from_config(cfg)
        .and_then(|p| p.run(&RunOptions::new(input, &output, Stages::Both)))
    {
        Ok(s) => {
            println!(
                "{} samples written to {}",
                s.report.samples_total,
                output.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
