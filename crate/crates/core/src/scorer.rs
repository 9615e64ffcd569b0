//! First-token surprisal of each reasoning step, plus two diagnostics:
//! top-k entropy at the step's first token and whole-step perplexity.
//!
//! All quantities are in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, SequenceScorer};
use crate::segmenter::{join_steps, StepSequence};
use crate::tokenizer::TokenSpan;

/// Separator between the question and the CoT in the scoring text.
pub const SCORING_DELIMITER: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integrity error at step {step}: {reason}")]
    Integrity { step: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredStep {
    pub step_index: usize,
    pub text: String,
    pub first_token: TokenSpan,
    pub surprisal: f64,
    pub entropy_topk: Option<f64>,
    pub step_ppl: Option<f64>,
}

pub fn surprisal(logprob: f64) -> Result<f64, ScoreError> {
    if logprob.is_nan() || logprob > 0.0 {
        return Err(ScoreError::Domain(format!("logprob {logprob} is not <= 0")));
    }
    // -0.0 would serialize oddly; a certain token has exactly zero surprisal.
    Ok(if logprob == 0.0 { 0.0 } else { -logprob })
}

/// Shannon entropy of the given alternatives after renormalizing them to
/// sum to one. This is a lower bound on the full-vocabulary entropy, since
/// endpoints only expose the top k.
pub fn entropy_topk(logprobs: &[f64]) -> Result<f64, ScoreError> {
    if logprobs.is_empty() {
        return Err(ScoreError::Domain("no alternatives".into()));
    }
    if let Some(bad) = logprobs.iter().find(|l| l.is_nan() || **l > 0.0) {
        return Err(ScoreError::Domain(format!("logprob {bad} is not <= 0")));
    }
    let max = logprobs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ScoreError::Domain(
            "all alternatives have zero probability".into(),
        ));
    }
    let lse = max + logprobs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let h: f64 = logprobs
        .iter()
        .map(|l| {
            let log_p = l - lse;
            let p = log_p.exp();
            if p == 0.0 {
                0.0
            } else {
                -p * log_p
            }
        })
        .sum();
    Ok(h.max(0.0))
}

/// `exp(mean surprisal)` over the tokens.
pub fn step_perplexity(tokens: &[TokenSpan]) -> Result<f64, ScoreError> {
    if tokens.is_empty() {
        return Err(ScoreError::Domain("no tokens".into()));
    }
    let mut total = 0.0;
    for t in tokens {
        total += surprisal(t.logprob)?;
    }
    Ok((total / tokens.len() as f64).exp())
}

/// The exact text sent for scoring, and the byte offset where the CoT begins.
pub fn scoring_context(question: &str, coarse: &StepSequence) -> (String, usize) {
    let mut text = String::with_capacity(
        question.len() + 2 + coarse.iter().map(|s| s.len() + 2).sum::<usize>(),
    );
    text.push_str(question);
    text.push_str(SCORING_DELIMITER);
    let base = text.len();
    text.push_str(&join_steps(coarse));
    (text, base)
}

/// Score every step of `coarse` with one call to `scorer`.
///
/// Each step's score is the surprisal of the first token starting at or after
/// the step's first byte in `question + "\n\n" + join(coarse)`.
pub fn score_steps(
    question: &str,
    coarse: &StepSequence,
    scorer: &dyn SequenceScorer,
    model: &str,
) -> Result<Vec<ScoredStep>, ScoreError> {
    if coarse.is_empty() {
        return Err(ScoreError::Domain("no steps to score".into()));
    }
    let (text, base) = scoring_context(question, coarse);
    let seq = scorer.score_sequence(&text, model)?;
    if seq.text != text {
        return Err(ScoreError::Gateway(GatewayError::Integrity(
            "scorer returned a different text".into(),
        )));
    }
    seq.check()?;

    let mut out = Vec::with_capacity(coarse.len());
    for (k, (step, offset)) in coarse.iter().zip(coarse.offsets()).enumerate() {
        let start = base + offset;
        let end = start + step.len();
        let first = seq.tokens.partition_point(|t| t.byte_start < start);
        let token = match seq.tokens.get(first) {
            Some(t) if t.byte_start < end => *t,
            _ => {
                return Err(ScoreError::Integrity {
                    step: k,
                    reason: "no token starts inside the step".into(),
                })
            }
        };
        let in_step = seq.tokens[first..].partition_point(|t| t.byte_start < end);
        let step_tokens = &seq.tokens[first..first + in_step];
        let entropy = seq
            .top_alternatives
            .as_ref()
            .and_then(|alts| alts.get(token.index))
            .filter(|a| !a.is_empty())
            .map(|a| entropy_topk(&a.iter().map(|(_, lp)| *lp).collect::<Vec<_>>()))
            .transpose()?;
        out.push(ScoredStep {
            step_index: k,
            text: step.clone(),
            first_token: token,
            surprisal: surprisal(token.logprob)?,
            entropy_topk: entropy,
            step_ppl: Some(step_perplexity(step_tokens)?),
        });
    }
    Ok(out)
}
