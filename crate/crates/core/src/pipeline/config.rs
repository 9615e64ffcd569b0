//! Run configuration and backend construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::anchor::{PromptSet, Stage1Config, DEFAULT_MAX_RETRIES};
use crate::gateway::http::HttpTransport;
use crate::gateway::openai::COMPLETIONS_PATH;
use crate::gateway::{
    Guarded, MockGenerator, MockScorer, OpenAiGenerator, OpenAiScorer, RateLimiter,
    RecordingTransport, ReplayTransport, RetryPolicy, Semaphore, SequenceScorer, TextGenerator,
    Transport, TransportError, API_KEY_ENV, SCORE_API_KEY_ENV,
};
use crate::matcher::DEFAULT_TAU;
use crate::refiner::DEFAULT_BUDGET;
use crate::tokenizer::{ReferenceTokenizer, Tokenizer};

use super::corpus::DEFAULT_MAX_MALFORMED_FRACTION;

pub const DEFAULT_GEN_MODEL: &str = "deepseek-chat";
pub const DEFAULT_SCORE_MODEL: &str = "deepseek-ai/DeepSeek-R1-Distill-Qwen-7B";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Everything a run needs besides input and output paths.
///
/// Loadable from TOML with the same key names as the command-line flags
/// (underscored). API keys are never read from here; they come from
/// `COTPRUNE_API_KEY` and `COTPRUNE_SCORE_API_KEY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau: f64,
    pub budget: usize,
    /// Stage-1 prune attempts per sample before falling back.
    pub max_retries: u32,
    /// Samples processed at once; also caps in-flight requests.
    pub concurrency: usize,
    pub seed: u64,
    /// Use the offline mock backends.
    pub mock: bool,
    pub gen_endpoint: Option<String>,
    pub score_endpoint: Option<String>,
    pub gen_model: String,
    pub score_model: String,
    pub top_logprobs: u32,
    pub max_output_tokens: u32,
    pub prune_temperature: f64,
    pub request_timeout_secs: u64,
    /// Transport-level retries for transient HTTP failures.
    pub http_retries: u32,
    /// Requests per second across both endpoints.
    pub rate_limit: Option<f64>,
    pub max_malformed_fraction: f64,
    pub prompts_dir: Option<PathBuf>,
    /// Serve all requests from a recorded fixture.
    pub replay_fixture: Option<PathBuf>,
    /// Record live exchanges into a fixture.
    pub record_fixture: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau: DEFAULT_TAU,
            budget: DEFAULT_BUDGET,
            max_retries: DEFAULT_MAX_RETRIES,
            concurrency: 4,
            seed: 0,
            mock: false,
            gen_endpoint: None,
            score_endpoint: None,
            gen_model: DEFAULT_GEN_MODEL.into(),
            score_model: DEFAULT_SCORE_MODEL.into(),
            top_logprobs: 5,
            max_output_tokens: 16384,
            prune_temperature: 2.0,
            request_timeout_secs: 300,
            http_retries: RetryPolicy::default().max_retries,
            rate_limit: None,
            max_malformed_fraction: DEFAULT_MAX_MALFORMED_FRACTION,
            prompts_dir: None,
            replay_fixture: None,
            record_fixture: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.max_malformed_fraction) {
            return bad("max_malformed_fraction must be in [0, 1]");
        }
        if self.rate_limit.is_some_and(|r| r.is_nan() || r <= 0.0) {
            return bad("rate_limit must be positive");
        }
        if self.replay_fixture.is_some() && self.record_fixture.is_some() {
            return bad("replay_fixture and record_fixture are mutually exclusive");
        }
        Ok(())
    }

    pub fn stage1(&self) -> Stage1Config {
        Stage1Config {
            tau: self.tau,
            max_retries: self.max_retries,
            prune_temperature: self.prune_temperature,
            max_output_tokens: self.max_output_tokens,
            model: self.gen_model.clone(),
            ..Stage1Config::default()
        }
    }

    pub fn prompts(&self) -> Result<PromptSet, ConfigError> {
        match &self.prompts_dir {
            Some(dir) => PromptSet::from_dir(dir).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(PromptSet::bundled()),
        }
    }

    /// Settings that change the output, as canonical JSON. Concurrency,
    /// timeouts and fixture paths are excluded.
    pub fn output_affecting(&self) -> Value {
        serde_json::json!({
            "tau": self.tau,
            "budget": self.budget,
            "max_retries": self.max_retries,
            "seed": self.seed,
            "mock": self.mock,
            "gen_model": self.gen_model,
            "score_model": self.score_model,
            "top_logprobs": self.top_logprobs,
            "max_output_tokens": self.max_output_tokens,
            "prune_temperature": self.prune_temperature,
        })
    }
}

/// Sends chat requests to one transport and scoring requests to another.
struct Router {
    generation: Arc<dyn Transport>,
    scoring: Arc<dyn Transport>,
}

impl Transport for Router {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        if path == COMPLETIONS_PATH {
            self.scoring.post_json(path, body)
        } else {
            self.generation.post_json(path, body)
        }
    }
}

/// Model access and tokenization for a run.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn TextGenerator>,
    pub scorer: Arc<dyn SequenceScorer>,
    pub tokenizer: Arc<dyn Tokenizer>,
    recorder: Option<Arc<RecordingTransport>>,
}

impl Backends {
    pub fn new(generator: Arc<dyn TextGenerator>, scorer: Arc<dyn SequenceScorer>) -> Self {
        Backends {
            generator,
            scorer,
            tokenizer: Arc::new(ReferenceTokenizer),
            recorder: None,
        }
    }

    pub fn mock(seed: u64) -> Self {
        Self::new(
            Arc::new(MockGenerator::new(seed)),
            Arc::new(MockScorer::new(seed)),
        )
    }

    /// Build the backends `cfg` asks for: mock, replay, or live HTTP
    /// (optionally recording).
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        if cfg.mock {
            return Ok(Self::mock(cfg.seed));
        }
        let (transport, recorder): (Arc<dyn Transport>, _) = match &cfg.replay_fixture {
            Some(path) => {
                let replay = ReplayTransport::from_file(path)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                (Arc::new(replay), None)
            }
            None => {
                let timeout = Duration::from_secs(cfg.request_timeout_secs);
                let gen_url = cfg.gen_endpoint.as_deref().ok_or_else(|| {
                    ConfigError::Invalid(
                        "gen_endpoint is required unless mock or replay is set".into(),
                    )
                })?;
                let score_url = cfg.score_endpoint.as_deref().ok_or_else(|| {
                    ConfigError::Invalid(
                        "score_endpoint is required unless mock or replay is set".into(),
                    )
                })?;
                let router: Arc<dyn Transport> = Arc::new(Router {
                    generation: Arc::new(HttpTransport::with_env_key(
                        gen_url,
                        &[API_KEY_ENV],
                        timeout,
                    )),
                    scoring: Arc::new(HttpTransport::with_env_key(
                        score_url,
                        &[SCORE_API_KEY_ENV, API_KEY_ENV],
                        timeout,
                    )),
                });
                match &cfg.record_fixture {
                    Some(out) => {
                        let rec = Arc::new(RecordingTransport::new(router, out));
                        (rec.clone() as Arc<dyn Transport>, Some(rec))
                    }
                    None => (router, None),
                }
            }
        };
        let retry = RetryPolicy {
            max_retries: cfg.http_retries,
            ..RetryPolicy::default()
        };
        let in_flight = Arc::new(Semaphore::new(cfg.concurrency));
        let rate = cfg
            .rate_limit
            .map(|r| Arc::new(RateLimiter::new(r, cfg.concurrency as u32)));
        let guarded = || {
            let g = Guarded::new(transport.clone(), retry, in_flight.clone());
            match &rate {
                Some(r) => g.with_rate_limit(r.clone()),
                None => g,
            }
        };
        Ok(Backends {
            generator: Arc::new(OpenAiGenerator::new(guarded())),
            scorer: Arc::new(OpenAiScorer::new(guarded(), cfg.top_logprobs)),
            tokenizer: Arc::new(ReferenceTokenizer),
            recorder,
        })
    }

    /// Write recorded exchanges, if recording.
    pub fn save_recording(&self) -> std::io::Result<()> {
        match &self.recorder {
            Some(r) => r.save(),
            None => Ok(()),
        }
    }
}
