//! Deterministic offline backends.
//!
//! The mock scorer tiles the text with [`ReferenceTokenizer::covering_spans`]
//! and assigns each token
//!
//! ```text
//! logprob = -(1 + (h mod 1000) / 250)
//! ```
//!
//! where `h` is 64-bit FNV-1a over `seed` (8 bytes little-endian), the token's
//! UTF-8 bytes, a `0xFF` separator, and the token index (8 bytes
//! little-endian). Values therefore lie in `[-4.996, -1]` and are identical
//! on every platform.
//!
//! The mock generator answers prompts in this order of precedence:
//! `[ECHO]` marker (returns the rest of that line), scripted marker
//! responses, then built-in behaviour for the two stage-1 prompt templates.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{
    GatewayError, Generation, GenerationRequest, ScoredSequence, SequenceScorer, TextGenerator,
};
use crate::gateway::limiter::Semaphore;
use crate::segmenter::{join_steps, split_steps};
use crate::tokenizer::{ReferenceTokenizer, TokenSpan, Tokenizer};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Text that makes the mock scorer fail with an integrity error.
pub const SCORE_FAULT_MARKER: &str = "[[mock:score-fault]]";
/// Text inside a thinking block that makes every mock prune attempt reorder steps.
pub const REORDER_MARKER: &str = "[[mock:reorder]]";

fn fnv1a(h: &mut u64, bytes: &[u8]) {
    for b in bytes {
        *h ^= u64::from(*b);
        *h = h.wrapping_mul(FNV_PRIME);
    }
}

/// Seeded hash of `(token_text, token_index)`.
pub fn token_hash(seed: u64, token: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    fnv1a(&mut h, &seed.to_le_bytes());
    fnv1a(&mut h, token.as_bytes());
    fnv1a(&mut h, &[0xff]);
    fnv1a(&mut h, &index.to_le_bytes());
    h
}

pub fn mock_logprob(seed: u64, token: &str, index: u64) -> f64 {
    let h = token_hash(seed, token, index);
    -(1.0 + (h % 1000) as f64 / 250.0)
}

pub struct MockScorer {
    seed: u64,
    top_k: usize,
    calls: AtomicUsize,
    latency: Option<(Duration, Semaphore)>,
}

impl MockScorer {
    pub fn new(seed: u64) -> Self {
        MockScorer {
            seed,
            top_k: 3,
            calls: AtomicUsize::new(0),
            latency: None,
        }
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    /// Sleep for `delay` inside each call while holding a permit of a
    /// `cap`-sized semaphore, so tests can observe in-flight counts.
    pub fn with_latency(mut self, delay: Duration, cap: usize) -> Self {
        self.latency = Some((delay, Semaphore::new(cap)));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.latency.as_ref().map_or(0, |(_, s)| s.peak())
    }
}

impl SequenceScorer for MockScorer {
    fn score_sequence(
        &self,
        full_text: &str,
        _model: &str,
    ) -> Result<ScoredSequence, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let _permit = self.latency.as_ref().map(|(d, s)| {
            let p = s.acquire();
            thread::sleep(*d);
            p
        });
        if full_text.contains(SCORE_FAULT_MARKER) {
            return Err(GatewayError::Integrity("injected scoring fault".into()));
        }
        let spans = ReferenceTokenizer::covering_spans(full_text);
        let mut tokens = Vec::with_capacity(spans.len());
        let mut alternatives = Vec::with_capacity(spans.len());
        for (i, r) in spans.into_iter().enumerate() {
            let text = &full_text[r.clone()];
            let lp = mock_logprob(self.seed, text, i as u64);
            tokens.push(TokenSpan {
                index: i,
                byte_start: r.start,
                byte_end: r.end,
                logprob: lp,
            });
            if self.top_k > 0 {
                let mut alts = vec![(text.to_owned(), lp)];
                for j in 1..self.top_k {
                    let alt = format!("<alt{j}>");
                    alts.push((alt.clone(), mock_logprob(self.seed, &alt, i as u64)));
                }
                alts.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                alternatives.push(alts);
            }
        }
        Ok(ScoredSequence {
            text: full_text.to_owned(),
            tokens,
            top_alternatives: (self.top_k > 0).then_some(alternatives),
        })
    }
}

/// Scripted and rule-based text generation.
///
/// Attempt counters live on the instance, so a fresh generator restarts every
/// prompt's retry sequence. Use a new instance per run to reproduce a run.
pub struct MockGenerator {
    seed: u64,
    scripts: Vec<(String, Vec<String>)>,
    counters: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        MockGenerator {
            seed,
            scripts: Vec::new(),
            counters: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Prompts containing `marker` get `responses` in order; the last one
    /// repeats once the list is exhausted.
    pub fn script(mut self, marker: impl Into<String>, responses: Vec<String>) -> Self {
        assert!(!responses.is_empty(), "script needs at least one response");
        self.scripts.push((marker.into(), responses));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next_count(&self, key: &str) -> usize {
        let mut c = self.counters.lock().unwrap();
        let n = c.entry(key.to_owned()).or_insert(0);
        let out = *n;
        *n += 1;
        out
    }

    fn respond(&self, req: &GenerationRequest) -> String {
        let prompt = &req.prompt;
        if let Some(pos) = prompt.find("[ECHO]") {
            let rest = &prompt[pos + "[ECHO]".len()..];
            return rest.lines().next().unwrap_or("").to_owned();
        }
        for (marker, responses) in &self.scripts {
            if prompt.contains(marker.as_str()) {
                let n = self.next_count(&format!("script:{marker}"));
                return responses[n.min(responses.len() - 1)].clone();
            }
        }
        if let Some(thinking) = between(
            prompt,
            "Thinking:\n```\n",
            "\n```\nThe compressed thinking is:",
        ) {
            let attempt = self.next_count(prompt);
            return self.prune(prompt, thinking, attempt, req.temperature);
        }
        if let Some(answer) = between(prompt, "```python\n", "\n```\nOnly return") {
            return format!(
                "Step-by-Step Solution\n\n1. Read the input.\n\n2. Compute the result.\n\nFinal Code\n```python\n{answer}\n```"
            );
        }
        "ok".to_owned()
    }

    /// Keep the first and last steps and a hash-chosen two thirds of the
    /// rest. Sampling at temperature above 1 sometimes reverses the kept
    /// steps, which the validator rejects.
    fn prune(&self, prompt: &str, thinking: &str, attempt: usize, temperature: f64) -> String {
        let steps = split_steps(thinking);
        let last = steps.len().saturating_sub(1);
        let kept = steps.retain_indices(|i| {
            i == 0 || i == last || !token_hash(self.seed, &steps[i], i as u64).is_multiple_of(3)
        });
        let roll = token_hash(self.seed, prompt, attempt as u64);
        let reorder =
            thinking.contains(REORDER_MARKER) || (temperature > 1.0 && roll.is_multiple_of(4));
        let body = if reorder {
            let mut v = kept.into_inner();
            v.reverse();
            v.join("\n\n")
        } else {
            join_steps(&kept)
        };
        if roll.is_multiple_of(2) {
            format!("```\n{body}\n```")
        } else {
            body
        }
    }
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let a = s.find(start)? + start.len();
    let b = s[a..].rfind(end)? + a;
    Some(&s[a..b])
}

impl TextGenerator for MockGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<Generation, GatewayError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.respond(req);
        let spans = ReferenceTokenizer.spans(&text);
        let cap = req.max_output_tokens as usize;
        if spans.len() > cap {
            return Ok(Generation {
                text: text[..spans[cap - 1].end].to_owned(),
                truncated: true,
            });
        }
        Ok(Generation {
            text,
            truncated: false,
        })
    }
}
