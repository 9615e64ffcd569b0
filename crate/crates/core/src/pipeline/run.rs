//! Concurrent, resumable corpus processing.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use crossbeam_channel::{bounded, unbounded};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::anchor::{coarse_prune, AnchorError, PromptSet, Stage1Config};
use crate::gateway::replay::canonical_json;
use crate::gateway::GatewayError;
use crate::refiner::{assemble_final, fine_prune, Refinement};
use crate::sample::{Sample, Status, SurprisalTrace};
use crate::scorer::{score_steps, ScoreError};
use crate::segmenter::{join_steps, split_steps};

use super::config::{Backends, ConfigError, PipelineConfig};
use super::corpus::{load_corpus, to_jsonl_line, CorpusError, SkippedLine};
use super::journal::{journal_path, read_checkpoint, Checkpoint, Journal};
use super::report::{compute_report, PruneReport};

pub const EXIT_OK: i32 = 0;
/// The run aborted: bad configuration, unreachable or unauthorized endpoint.
pub const EXIT_SYSTEMIC: i32 = 1;
/// The run finished but some samples failed.
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stages {
    /// Coarse pruning only.
    Stage1,
    /// Fine pruning of samples that already passed stage 1.
    Stage2,
    Both,
}

impl Stages {
    fn stage1(self) -> bool {
        matches!(self, Stages::Stage1 | Stages::Both)
    }

    fn stage2(self) -> bool {
        matches!(self, Stages::Stage2 | Stages::Both)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("aborted at sample {id}: {source}")]
    Systemic { id: String, source: GatewayError },
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Defaults to `<output>.report.json`.
    pub report: Option<PathBuf>,
    pub stages: Stages,
    /// Continue from the journal next to `output` instead of starting over.
    pub resume: bool,
    /// Stop after this many samples are committed, as if the process died.
    pub halt_after: Option<usize>,
}

impl RunOptions {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>, stages: Stages) -> Self {
        RunOptions {
            input: input.into(),
            output: output.into(),
            report: None,
            stages,
            resume: false,
            halt_after: None,
        }
    }

    pub fn report_path(&self) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| default_report_path(&self.output))
    }
}

pub fn default_report_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: PruneReport,
    pub report_path: Option<PathBuf>,
    pub skipped: Vec<SkippedLine>,
    /// Samples already committed when this invocation started.
    pub resumed_from: usize,
    /// Samples committed by this invocation.
    pub processed: usize,
    /// The run stopped early because of `halt_after`.
    pub halted: bool,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.report.failed > 0 {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

type Outcome = Result<Sample, (String, GatewayError)>;

pub struct Pipeline {
    cfg: PipelineConfig,
    stage1: Stage1Config,
    prompts: PromptSet,
    backends: Backends,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, backends: Backends) -> Result<Self, RunError> {
        cfg.validate()?;
        Ok(Pipeline {
            stage1: cfg.stage1(),
            prompts: cfg.prompts()?,
            cfg,
            backends,
        })
    }

    /// Build with the backends the configuration describes.
    pub fn from_config(cfg: PipelineConfig) -> Result<Self, RunError> {
        let backends = Backends::from_config(&cfg)?;
        Self::new(cfg, backends)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    /// Advance one sample through the requested stages.
    ///
    /// Per-sample problems mark the sample failed; only systemic gateway
    /// errors are returned. Samples not at the right status for a stage
    /// pass through unchanged.
    pub fn process(&self, sample: Sample, stages: Stages) -> Result<Sample, GatewayError> {
        let mut s = sample;
        if stages.stage1() && s.status == Status::Pending {
            s = self.run_stage1(s)?;
        }
        if stages.stage2() && s.status.has_coarse() && s.status != Status::Stage2Ok {
            s = self.run_stage2(s)?;
        }
        Ok(s)
    }

    fn run_stage1(&self, sample: Sample) -> Result<Sample, GatewayError> {
        let backup = sample.clone();
        match coarse_prune(
            sample,
            &self.stage1,
            &*self.backends.generator,
            &self.prompts,
        ) {
            Ok(s) => Ok(s),
            Err(AnchorError::Gateway(e)) if e.is_systemic() => Err(e),
            Err(e) => {
                let mut s = backup;
                s.fail(e.to_string());
                Ok(s)
            }
        }
    }

    fn run_stage2(&self, mut sample: Sample) -> Result<Sample, GatewayError> {
        let coarse = split_steps(sample.cot_coarse.as_deref().unwrap_or_default());
        if coarse.is_empty() {
            sample.fail("coarse CoT has no steps");
            return Ok(sample);
        }
        let tokenizer = &*self.backends.tokenizer;
        let budget = self.cfg.budget;
        let mut trace = None;
        let refined = if tokenizer.count(&join_steps(&coarse)) <= budget {
            Refinement {
                steps: coarse,
                removed: Vec::new(),
                budget_violation: false,
            }
        } else {
            let scored = match score_steps(
                &sample.question,
                &coarse,
                &*self.backends.scorer,
                &self.cfg.score_model,
            ) {
                Ok(s) => s,
                Err(ScoreError::Gateway(e)) if e.is_systemic() => return Err(e),
                Err(e) => {
                    sample.fail(e.to_string());
                    return Ok(sample);
                }
            };
            trace = Some(SurprisalTrace {
                scores: scored.iter().map(|s| s.surprisal).collect(),
                removed: Vec::new(),
            });
            match fine_prune(&scored, budget, tokenizer) {
                Ok(r) => r,
                Err(e) => {
                    sample.fail(e.to_string());
                    return Ok(sample);
                }
            }
        };
        let mut candidate = sample.clone();
        candidate.surprisal_trace = trace;
        match assemble_final(candidate, &refined) {
            Ok(s) => Ok(s),
            Err(e) => {
                sample.fail(e.to_string());
                Ok(sample)
            }
        }
    }

    fn fingerprint(&self, input: &[u8], stages: Stages) -> String {
        let doc = serde_json::json!({
            "input": hex::encode(Sha256::digest(input)),
            "config": self.cfg.output_affecting(),
            "stages": stages,
        });
        hex::encode(Sha256::digest(canonical_json(&doc).as_bytes()))
    }

    /// Process a corpus file into an output corpus and a report.
    ///
    /// Output records appear in input order regardless of concurrency. Every
    /// committed record is journaled, so an interrupted run can be resumed
    /// with `resume` and produces the same bytes as an uninterrupted one.
    pub fn run(&self, opts: &RunOptions) -> Result<RunSummary, RunError> {
        let input_bytes = fs::read(&opts.input).map_err(io_err(&opts.input))?;
        let corpus = load_corpus(&opts.input, self.cfg.max_malformed_fraction)?;
        let fingerprint = self.fingerprint(&input_bytes, opts.stages);
        let jpath = journal_path(&opts.output);

        let checkpoint = if opts.resume {
            read_checkpoint(&jpath, &fingerprint).map_err(|e| RunError::Resume(e.to_string()))?
        } else {
            None
        };
        let (mut out, mut journal, start, mut offset) = match checkpoint {
            Some(cp) => {
                let mut f = OpenOptions::new()
                    .read(true)
                    .write(true)
                    .open(&opts.output)
                    .map_err(io_err(&opts.output))?;
                let len = f.metadata().map_err(io_err(&opts.output))?.len();
                if len < cp.offset || cp.committed > corpus.samples.len() {
                    return Err(RunError::Resume(format!(
                        "output holds {len} bytes but the journal records {} samples in {} bytes",
                        cp.committed, cp.offset
                    )));
                }
                f.set_len(cp.offset).map_err(io_err(&opts.output))?;
                f.seek(SeekFrom::End(0)).map_err(io_err(&opts.output))?;
                let j = Journal::open(&jpath, &fingerprint, false).map_err(io_err(&jpath))?;
                info!(committed = cp.committed, "resuming");
                (f, j, cp.committed, cp.offset)
            }
            None => {
                let f = File::create(&opts.output).map_err(io_err(&opts.output))?;
                let j = Journal::open(&jpath, &fingerprint, true).map_err(io_err(&jpath))?;
                (f, j, 0, 0)
            }
        };

        let total = corpus.samples.len();
        let todo = &corpus.samples[start..];
        let workers = self.cfg.concurrency.min(todo.len()).max(1);
        let cancel = AtomicBool::new(false);
        let mut fatal: Option<RunError> = None;
        let mut halted = false;
        let mut committed = start;

        thread::scope(|scope| {
            let (job_tx, job_rx) = bounded::<(usize, &Sample)>(workers);
            let (res_tx, res_rx) = unbounded::<(usize, Outcome)>();
            let cancel = &cancel;

            scope.spawn(move || {
                for (i, s) in todo.iter().enumerate() {
                    if cancel.load(Ordering::Relaxed) || job_tx.send((start + i, s)).is_err() {
                        break;
                    }
                }
            });
            for _ in 0..workers {
                let job_rx = job_rx.clone();
                let res_tx = res_tx.clone();
                scope.spawn(move || {
                    for (i, s) in job_rx.iter() {
                        if cancel.load(Ordering::Relaxed) {
                            break;
                        }
                        let id = s.id.clone();
                        let r = self.process(s.clone(), opts.stages).map_err(|e| (id, e));
                        if res_tx.send((i, r)).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(job_rx);
            drop(res_tx);

            let mut ready: BTreeMap<usize, Outcome> = BTreeMap::new();
            'recv: for (i, r) in res_rx.iter() {
                ready.insert(i, r);
                while let Some(r) = ready.remove(&committed) {
                    let sample = match r {
                        Ok(s) => s,
                        Err((id, source)) => {
                            fatal = Some(RunError::Systemic { id, source });
                            break 'recv;
                        }
                    };
                    let line = to_jsonl_line(&sample);
                    let written = out
                        .write_all(line.as_bytes())
                        .and_then(|_| out.sync_data())
                        .map_err(io_err(&opts.output))
                        .and_then(|_| {
                            offset += line.len() as u64;
                            journal
                                .record(Checkpoint {
                                    committed: committed + 1,
                                    offset,
                                })
                                .map_err(io_err(&jpath))
                        });
                    if let Err(e) = written {
                        fatal = Some(e);
                        break 'recv;
                    }
                    committed += 1;
                    info!(committed, total, id = %sample.id, status = sample.status.as_str(), "committed");
                    if opts.halt_after == Some(committed) && committed < total {
                        halted = true;
                        break 'recv;
                    }
                }
            }
            cancel.store(true, Ordering::Relaxed);
        });

        if let Some(e) = fatal {
            return Err(e);
        }
        drop(out);
        let written = load_corpus(&opts.output, 0.0)?;
        if written.samples.len() != committed {
            warn!(
                expected = committed,
                found = written.samples.len(),
                "output record count mismatch"
            );
        }
        let mut report = compute_report(&written.samples, &*self.backends.tokenizer);
        report.malformed_lines = corpus.skipped.len();
        let report_path = if halted {
            None
        } else {
            let p = opts.report_path();
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            fs::write(&p, text).map_err(io_err(&p))?;
            Some(p)
        };
        self.backends.save_recording().map_err(|e| RunError::Io {
            path: self.cfg.record_fixture.clone().unwrap_or_default(),
            source: e,
        })?;
        Ok(RunSummary {
            report,
            report_path,
            skipped: corpus.skipped,
            resumed_from: start,
            processed: committed - start,
            halted,
        })
    }
}

/// Read a report written by [`Pipeline::run`].
pub fn load_report(path: &Path) -> Result<PruneReport, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Io {
        path: path.to_owned(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}
