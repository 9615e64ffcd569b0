use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use cotprune::pipeline::{
    audit_corpus, audit_report, compute_report, load_corpus, load_report, sft_records, write_jsonl,
    Pipeline, PipelineConfig, RunError, RunOptions, SftFormat, Stages, EXIT_OK, EXIT_PARTIAL,
    EXIT_SYSTEMIC,
};
use cotprune::ReferenceTokenizer;

/// Prune chain-of-thought traces for code tasks.
///
/// API keys are read from COTPRUNE_API_KEY (and optionally
/// COTPRUNE_SCORE_API_KEY for the scoring endpoint).
#[derive(Parser)]
#[command(name = "cotprune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coarse-prune each CoT with the generation model.
    Stage1(RunArgs),
    /// Fine-prune stage-1 output to the token budget.
    Stage2(RunArgs),
    /// Both stages in one pass.
    Run(RunArgs),
    /// Print a token report for a corpus.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Check an output corpus for subsequence, match and budget violations.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
        /// Also compare against a stored report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write prompt/response records for fine-tuning.
    EmitSft {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Include stage-1 fallback samples, marked with "fallback": true.
        #[arg(long)]
        include_fallback: bool,
        /// plain or think-tags
        #[arg(long, default_value = "plain")]
        format: SftFormat,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// TOML file with defaults for the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report path; defaults to <output>.report.json.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    gen_endpoint: Option<String>,
    #[arg(long)]
    score_endpoint: Option<String>,
    #[arg(long)]
    gen_model: Option<String>,
    #[arg(long)]
    score_model: Option<String>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    top_logprobs: Option<u32>,
    /// Requests per second across both endpoints.
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long)]
    prompts_dir: Option<PathBuf>,
    /// Offline deterministic backends.
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue an interrupted run.
    #[arg(long)]
    resume: bool,
    /// Serve requests from a recorded fixture instead of the network.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Record live exchanges into a fixture.
    #[arg(long)]
    record: Option<PathBuf>,
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig, RunError> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig, RunError> {
        let mut c = load_config(self.config.as_ref())?;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { c.$f = v.clone(); })* };
        }
        set!(
            tau,
            budget,
            gen_model,
            score_model,
            max_retries,
            concurrency,
            top_logprobs,
            seed
        );
        macro_rules! set_opt {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = &self.$f { c.$g = Some(v.clone()); })* };
        }
        set_opt!(gen_endpoint => gen_endpoint, score_endpoint => score_endpoint, rate_limit => rate_limit,
            prompts_dir => prompts_dir, replay => replay_fixture, record => record_fixture);
        c.mock |= self.mock;
        Ok(c)
    }
}

fn run(args: &RunArgs, stages: Stages) -> Result<i32, RunError> {
    let pipeline = Pipeline::from_config(args.config()?)?;
    let opts = RunOptions {
        report: args.report.clone(),
        resume: args.resume,
        ..RunOptions::new(&args.input, &args.output, stages)
    };
    let summary = pipeline.run(&opts)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary.report).expect("report serializes")
    );
    Ok(summary.exit_code())
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Stage1(a) => run(&a, Stages::Stage1),
        Command::Stage2(a) => run(&a, Stages::Stage2),
        Command::Run(a) => run(&a, Stages::Both),
        Command::Stats { input } => {
            let corpus = load_corpus(&input, 1.0)?;
            let mut report = compute_report(&corpus.samples, &ReferenceTokenizer);
            report.malformed_lines = corpus.skipped.len();
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(EXIT_OK)
        }
        Command::Validate {
            input,
            tau,
            budget,
            report,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let corpus = load_corpus(&input, 0.0)?;
            let tau = tau.unwrap_or(cfg.tau);
            let budget = budget.unwrap_or(cfg.budget);
            let mut summary = audit_corpus(&corpus.samples, tau, budget, &ReferenceTokenizer);
            if let Some(path) = report {
                let stored = load_report(&path)?;
                let recomputed = compute_report(&corpus.samples, &ReferenceTokenizer);
                summary.findings.extend(audit_report(&stored, &recomputed));
            }
            for f in &summary.findings {
                println!("{}", serde_json::to_string(f).expect("finding serializes"));
            }
            eprintln!(
                "{} samples checked, {} findings",
                summary.samples,
                summary.findings.len()
            );
            Ok(if summary.passed() {
                EXIT_OK
            } else {
                EXIT_PARTIAL
            })
        }
        Command::EmitSft {
            input,
            output,
            include_fallback,
            format,
        } => {
            let corpus = load_corpus(&input, 0.0)?;
            let records = sft_records(&corpus.samples, include_fallback, &*format.formatter());
            let n = write_jsonl(&output, &records)?;
            eprintln!(
                "wrote {n} of {} samples to {}",
                corpus.samples.len(),
                output.display()
            );
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    // Usage errors are configuration failures; 2 is reserved for sample failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_SYSTEMIC as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SYSTEMIC
        }
    };
    ExitCode::from(code as u8)
}
