//! Access to the two model capabilities the pipeline needs: chat-style text
//! generation and per-token logprob scoring of a fixed text.
//!
//! Live endpoints speak the OpenAI-compatible wire protocol
//! (`/chat/completions` for generation, `/completions` with `echo` and
//! `logprobs` for scoring). [`mock`] provides deterministic offline backends
//! and [`replay`] serves recorded responses from a fixture file.

pub mod http;
pub mod limiter;
pub mod mock;
pub mod openai;
pub mod replay;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::tokenizer::TokenSpan;

pub use limiter::{Guarded, RateLimiter, RetryPolicy, Semaphore};
pub use mock::{MockGenerator, MockScorer};
pub use openai::{OpenAiGenerator, OpenAiScorer};
pub use replay::{Fixture, RecordingTransport, ReplayTransport};

/// Environment variable holding the bearer token for live endpoints.
pub const API_KEY_ENV: &str = "COTPRUNE_API_KEY";
/// Optional separate key for the scoring endpoint; falls back to [`API_KEY_ENV`].
pub const SCORE_API_KEY_ENV: &str = "COTPRUNE_SCORE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    /// The completion stopped at `max_output_tokens`.
    pub truncated: bool,
}

/// Per-token logprobs for a text, aligned to its bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub text: String,
    pub tokens: Vec<TokenSpan>,
    /// Top-k alternatives at each token position, when the backend provides them.
    pub top_alternatives: Option<Vec<Vec<(String, f64)>>>,
}

impl ScoredSequence {
    /// Verify that spans tile `text` in order and every logprob is `<= 0`.
    pub fn check(&self) -> Result<(), GatewayError> {
        let mut at = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i || t.byte_start != at || t.byte_end < t.byte_start {
                return Err(GatewayError::Integrity(format!(
                    "token {i} does not continue at byte {at}"
                )));
            }
            if !self.text.is_char_boundary(t.byte_start) || !self.text.is_char_boundary(t.byte_end)
            {
                return Err(GatewayError::Integrity(format!(
                    "token {i} splits a UTF-8 character"
                )));
            }
            if t.logprob.is_nan() || t.logprob > 0.0 {
                return Err(GatewayError::Integrity(format!(
                    "token {i} has logprob {} > 0",
                    t.logprob
                )));
            }
            at = t.byte_end;
        }
        if at != self.text.len() {
            return Err(GatewayError::Integrity(format!(
                "tokens cover {at} of {} bytes",
                self.text.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("endpoint lacks capability: {0}")]
    Capability(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no recorded response for request {digest}")]
    ReplayMiss { digest: String },
    #[error("configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors that make every further request pointless; the pipeline aborts on these.
    pub fn is_systemic(&self) -> bool {
        matches!(
            self,
            GatewayError::Auth { .. }
                | GatewayError::Capability(_)
                | GatewayError::Config(_)
                | GatewayError::ReplayMiss { .. }
        )
    }
}

/// Chat-style text generation.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<Generation, GatewayError>;
}

/// Echoed-prompt logprob scoring.
pub trait SequenceScorer: Send + Sync {
    fn score_sequence(
        &self,
        full_text: &str,
        model_name: &str,
    ) -> Result<ScoredSequence, GatewayError>;
}

impl<T: TextGenerator + ?Sized> TextGenerator for std::sync::Arc<T> {
    fn generate(&self, req: &GenerationRequest) -> Result<Generation, GatewayError> {
        (**self).generate(req)
    }
}

impl<T: SequenceScorer + ?Sized> SequenceScorer for std::sync::Arc<T> {
    fn score_sequence(
        &self,
        full_text: &str,
        model_name: &str,
    ) -> Result<ScoredSequence, GatewayError> {
        (**self).score_sequence(full_text, model_name)
    }
}

/// Failure of a single HTTP exchange, before retry accounting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("{0}")]
    Io(String),
    #[error("response decode: {0}")]
    Decode(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Io(_) => true,
            TransportError::Decode(_) | TransportError::ReplayMiss(_) => false,
        }
    }
}

/// One JSON-over-POST exchange. `path` is relative to the endpoint base URL.
pub trait Transport: Send + Sync {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        (**self).post_json(path, body)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        (**self).post_json(path, body)
    }
}

/// Map a final transport failure (after retries) to the gateway's error kinds.
pub(crate) fn classify(err: TransportError, attempts: u32) -> GatewayError {
    match err {
        TransportError::Status {
            status: status @ (401 | 403),
            ..
        } => GatewayError::Auth { status },
        TransportError::Status { status, body } if status < 500 && status != 429 => {
            GatewayError::Rejected {
                status,
                message: body,
            }
        }
        TransportError::Decode(m) => GatewayError::Malformed(m),
        TransportError::ReplayMiss(digest) => GatewayError::ReplayMiss { digest },
        other => GatewayError::Transport {
            attempts,
            message: other.to_string(),
        },
    }
}
