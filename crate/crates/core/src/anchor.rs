//! Stage 1: anchor-guided coarse pruning.
//!
//! A deterministic "direct" derivation of the answer is generated first and
//! used only as a reference when asking the model to cut the original CoT
//! down. Each high-temperature candidate is accepted only if
//! [`pattern_match`] certifies it as an ordered, high-similarity
//! substructure of the original.

use std::fs;
use std::path::Path;

use thiserror::Error;
use tracing::debug;

use crate::gateway::{GatewayError, GenerationRequest, TextGenerator};
use crate::matcher::{pattern_match, DEFAULT_TAU};
use crate::sample::{Flag, Sample, SampleError, Status};
use crate::segmenter::{has_fence_split, split_steps};

pub const DIRECT_TEMPLATE_FILE: &str = "direct_cot.txt";
pub const PRUNE_TEMPLATE_FILE: &str = "coarse_prune.txt";
pub const DEFAULT_MAX_RETRIES: u32 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnchorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    State(#[from] SampleError),
}

/// A prompt with named `{slot}` placeholders, each occurring exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
    slots: Vec<&'static str>,
}

impl PromptTemplate {
    pub fn parse(text: &str, slots: &[&'static str]) -> Result<Self, AnchorError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        for slot in slots {
            let n = text.matches(&format!("{{{slot}}}")).count();
            if n != 1 {
                return Err(AnchorError::Config(format!(
                    "template must contain {{{slot}}} exactly once, found {n}"
                )));
            }
        }
        Ok(PromptTemplate {
            text: text.to_owned(),
            slots: slots.to_vec(),
        })
    }

    /// Substitute in a single left-to-right pass; inserted values are never
    /// rescanned for placeholders.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(
            self.text.len() + values.iter().map(|v| v.1.len()).sum::<usize>(),
        );
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let hit = values.iter().find(|(name, _)| {
                self.slots.contains(name)
                    && after.starts_with(name)
                    && after[name.len()..].starts_with('}')
            });
            match hit {
                Some((name, value)) => {
                    out.push_str(&rest[..open]);
                    out.push_str(value);
                    rest = &after[name.len() + 1..];
                }
                None => {
                    out.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub direct: PromptTemplate,
    pub prune: PromptTemplate,
}

impl PromptSet {
    /// The templates shipped in `assets/prompts`.
    pub fn bundled() -> Self {
        PromptSet {
            direct: PromptTemplate::parse(
                include_str!("../assets/prompts/direct_cot.txt"),
                &["question", "answer"],
            )
            .expect("bundled direct template"),
            prune: PromptTemplate::parse(
                include_str!("../assets/prompts/coarse_prune.txt"),
                &["solution", "think"],
            )
            .expect("bundled prune template"),
        }
    }

    /// Load `direct_cot.txt` and `coarse_prune.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, AnchorError> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p)
                .map_err(|e| AnchorError::Config(format!("prompt template {}: {e}", p.display())))
        };
        Ok(PromptSet {
            direct: PromptTemplate::parse(&read(DIRECT_TEMPLATE_FILE)?, &["question", "answer"])?,
            prune: PromptTemplate::parse(&read(PRUNE_TEMPLATE_FILE)?, &["solution", "think"])?,
        })
    }

    pub fn render_direct_prompt(&self, question: &str, answer: &str) -> String {
        self.direct
            .render(&[("question", question), ("answer", answer)])
    }

    pub fn render_prune_prompt(&self, solution: &str, thinking: &str) -> String {
        self.prune
            .render(&[("solution", solution), ("think", thinking)])
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet::bundled()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    pub tau: f64,
    pub max_retries: u32,
    pub direct_temperature: f64,
    pub direct_top_p: f64,
    pub prune_temperature: f64,
    pub prune_top_p: f64,
    pub max_output_tokens: u32,
    pub model: String,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            tau: DEFAULT_TAU,
            max_retries: DEFAULT_MAX_RETRIES,
            direct_temperature: 0.0,
            direct_top_p: 1.0,
            prune_temperature: 2.0,
            prune_top_p: 1.0,
            max_output_tokens: 16384,
            model: "deepseek-chat".into(),
        }
    }
}

fn fence_run(line: &str) -> Option<usize> {
    let t = line.trim();
    let n = t.chars().take_while(|c| *c == '`').count();
    (n >= 3).then_some(n)
}

/// Remove one outer code fence if it wraps the whole text.
///
/// The first line must open a fence and the first bare closing fence after
/// it must be the last line; otherwise the text is returned trimmed.
pub fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let lines: Vec<&str> = trimmed.split('\n').collect();
    if lines.len() < 2 {
        return trimmed;
    }
    let Some(open) = fence_run(lines[0]) else {
        return trimmed;
    };
    let closes = |l: &str| {
        let t = l.trim();
        fence_run(t).is_some_and(|n| n >= open && n == t.len())
    };
    let close = lines.iter().skip(1).position(|l| closes(l)).map(|i| i + 1);
    if close != Some(lines.len() - 1) {
        return trimmed;
    }
    let start = lines[0].len() + 1;
    let end = trimmed.len() - lines[lines.len() - 1].len();
    trimmed[start.min(end)..end]
        .trim_end_matches('\n')
        .trim_end_matches('\r')
}

fn request(cfg: &Stage1Config, prompt: String, temperature: f64, top_p: f64) -> GenerationRequest {
    GenerationRequest {
        prompt,
        temperature,
        top_p,
        max_output_tokens: cfg.max_output_tokens,
        model_name: cfg.model.clone(),
    }
}

/// Run stage 1 on a pending sample.
///
/// Pattern-match failures consume retries; transport failures propagate.
/// After `max_retries` rejected candidates the original CoT is kept as the
/// coarse CoT and the sample is marked as a fallback.
pub fn coarse_prune(
    mut sample: Sample,
    cfg: &Stage1Config,
    generator: &dyn TextGenerator,
    prompts: &PromptSet,
) -> Result<Sample, AnchorError> {
    if sample.status != Status::Pending {
        return Err(SampleError::Transition {
            id: sample.id.clone(),
            from: sample.status,
            to: Status::Stage1Ok,
        }
        .into());
    }
    let origin = split_steps(&sample.cot_original);
    if has_fence_split(&origin) {
        sample.set_flag(Flag::FenceSplit);
    }
    if origin.len() <= 1 {
        sample.cot_coarse = Some(sample.cot_original.clone());
        sample.set_flag(Flag::SingleStep);
        sample.transition(Status::Stage1Ok)?;
        return Ok(sample);
    }

    if cfg.max_retries > 0 {
        let direct = generator.generate(&request(
            cfg,
            prompts.render_direct_prompt(&sample.question, &sample.answer),
            cfg.direct_temperature,
            cfg.direct_top_p,
        ))?;
        if direct.truncated {
            sample.set_flag(Flag::TruncatedGeneration);
        }
        let prune_prompt = prompts.render_prune_prompt(&direct.text, &sample.cot_original);
        sample.cot_direct = Some(direct.text);

        for attempt in 1..=cfg.max_retries {
            sample.retries_used = attempt;
            let candidate = generator.generate(&request(
                cfg,
                prune_prompt.clone(),
                cfg.prune_temperature,
                cfg.prune_top_p,
            ))?;
            if candidate.truncated {
                sample.set_flag(Flag::TruncatedGeneration);
            }
            let text = strip_code_fence(&candidate.text);
            let coarse = split_steps(text);
            let outcome = pattern_match(&origin, &coarse, cfg.tau);
            debug!(id = %sample.id, attempt, valid = outcome.valid, steps = coarse.len(), "coarse candidate");
            if outcome.valid && !coarse.is_empty() {
                sample.cot_coarse = Some(text.to_owned());
                sample.transition(Status::Stage1Ok)?;
                return Ok(sample);
            }
        }
    }

    sample.cot_coarse = Some(sample.cot_original.clone());
    sample.set_flag(Flag::Stage1Fallback);
    sample.transition(Status::Stage1Fallback)?;
    Ok(sample)
}
