//! Corpus-level orchestration: loading, concurrent two-stage processing with
//! ordered, journaled output, reporting, auditing and SFT export.

pub mod audit;
pub mod config;
pub mod corpus;
pub mod journal;
pub mod report;
pub mod run;
pub mod sft;

pub use audit::{audit_corpus, audit_report, audit_sample, AuditCheck, AuditFinding, AuditSummary};
pub use config::{Backends, ConfigError, PipelineConfig};
pub use corpus::{load_corpus, write_jsonl, Corpus, CorpusError, CorpusReader, SkippedLine};
pub use report::{compute_report, reduction_pct, PruneReport};
pub use run::{
    default_report_path, load_report, Pipeline, RunError, RunOptions, RunSummary, Stages, EXIT_OK,
    EXIT_PARTIAL, EXIT_SYSTEMIC,
};
pub use sft::{
    sft_record, sft_records, PlainFormatter, SftFormat, SftFormatter, SftRecord, ThinkTagFormatter,
};
