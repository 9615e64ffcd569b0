//! Compress chain-of-thought traces for code tasks into shorter, still
//! faithful traces suitable for supervised fine-tuning.
//!
//! Two stages run per sample. The *anchor* stage asks a generation model to
//! drop redundant reasoning steps and accepts the result only if every kept
//! step still lines up, in order, with a step of the original. The *refine*
//! stage scores each remaining step by the surprisal of its first token under
//! a scoring model and removes the least surprising steps until the trace
//! fits a token budget.
//!
//! ```
//! use cotprune::{split_steps, join_steps, gestalt_similarity};
//!
//! let steps = split_steps("read n\n\n\nloop over digits\n\nprint sum");
//! assert_eq!(steps.len(), 3);
//! assert_eq!(join_steps(&steps), "read n\n\nloop over digits\n\nprint sum");
//! // 16 matched chars out of 16 + 20.
//! let s = gestalt_similarity("loop over digits", "loop over the digits");
//! assert!((s - 32.0 / 36.0).abs() < 1e-12);
//! ```

pub mod anchor;
pub mod gateway;
pub mod matcher;
pub mod pipeline;
pub mod refiner;
pub mod sample;
pub mod scorer;
pub mod segmenter;
pub mod tokenizer;

pub use anchor::{coarse_prune, strip_code_fence, AnchorError, PromptSet, Stage1Config};
pub use gateway::{
    GatewayError, Generation, GenerationRequest, MockGenerator, MockScorer, ScoredSequence,
    SequenceScorer, TextGenerator,
};
pub use matcher::{gestalt_similarity, pattern_match, AlignedStep, MatchOutcome, DEFAULT_TAU};
pub use pipeline::{Backends, Pipeline, PipelineConfig, PruneReport, RunOptions, Stages};
pub use refiner::{assemble_final, fine_prune, removal_order, Refinement, DEFAULT_BUDGET};
pub use sample::{validate_sample, Flag, Sample, SampleError, Status, SurprisalTrace};
pub use scorer::{entropy_topk, score_steps, step_perplexity, surprisal, ScoredStep};
pub use segmenter::{join_steps, split_steps, StepSequence};
pub use tokenizer::{ReferenceTokenizer, TokenSpan, Tokenizer};
