//! Recorded-response fixtures.
//!
//! A fixture is a JSON file:
//!
//! ```json
//! {
//!   "version": 1,
//!   "entries": {
//!     "<sha256 hex>": { "path": "chat/completions", "request": {...}, "responses": [{...}] }
//!   }
//! }
//! ```
//!
//! The key is the SHA-256 of the canonical JSON (sorted keys, no whitespace)
//! of `{"body": request, "path": path}`. Responses are stored raw, so replay
//! exercises the same parsing as a live endpoint. A request sent more than
//! once (a resampled generation) keeps every response, served back in order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{GatewayError, Transport, TransportError};

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub path: String,
    pub request: Value,
    pub responses: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub version: u32,
    pub entries: BTreeMap<String, FixtureEntry>,
}

impl Default for Fixture {
    fn default() -> Self {
        Fixture {
            version: FIXTURE_VERSION,
            entries: BTreeMap::new(),
        }
    }
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&m[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn canonical_json(v: &Value) -> String {
    let mut s = String::new();
    write_canonical(v, &mut s);
    s
}

pub fn request_digest(path: &str, body: &Value) -> String {
    let canon = canonical_json(&json!({"path": path, "body": body}));
    hex::encode(Sha256::digest(canon.as_bytes()))
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| {
            GatewayError::Config(format!("cannot read fixture {}: {e}", path.display()))
        })?;
        let fx: Fixture = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("bad fixture {}: {e}", path.display())))?;
        if fx.version != FIXTURE_VERSION {
            return Err(GatewayError::Config(format!(
                "fixture version {} unsupported",
                fx.version
            )));
        }
        Ok(fx)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("fixture serializes");
        fs::write(path, text + "\n")
    }

    /// Append `response` to the responses recorded for this request.
    pub fn insert(&mut self, path: &str, request: Value, response: Value) {
        let digest = request_digest(path, &request);
        self.entries
            .entry(digest)
            .or_insert_with(|| FixtureEntry {
                path: path.to_owned(),
                request,
                responses: Vec::new(),
            })
            .responses
            .push(response);
    }

    /// The `nth` response (0-based) recorded for this request.
    pub fn lookup(&self, path: &str, body: &Value, nth: usize) -> Option<&Value> {
        self.entries
            .get(&request_digest(path, body))
            .and_then(|e| e.responses.get(nth))
    }
}

/// Serves responses from a fixture; unknown requests fail without retry.
pub struct ReplayTransport {
    fixture: Fixture,
    served: Mutex<HashMap<String, usize>>,
}

impl ReplayTransport {
    pub fn new(fixture: Fixture) -> Self {
        ReplayTransport {
            fixture,
            served: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(ReplayTransport::new(Fixture::load(path)?))
    }
}

impl Transport for ReplayTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let digest = request_digest(path, body);
        let nth = {
            let mut served = self.served.lock().unwrap();
            let n = served.entry(digest.clone()).or_insert(0);
            *n += 1;
            *n - 1
        };
        self.fixture
            .lookup(path, body, nth)
            .cloned()
            .ok_or_else(|| TransportError::ReplayMiss(format!("{digest} (response {})", nth + 1)))
    }
}

/// Forwards to a live transport and records every successful exchange.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    fixture: Mutex<Fixture>,
    out: PathBuf,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>, out: impl Into<PathBuf>) -> Self {
        RecordingTransport {
            inner,
            fixture: Mutex::new(Fixture::default()),
            out: out.into(),
        }
    }

    pub fn save(&self) -> std::io::Result<()> {
        self.fixture.lock().unwrap().save(&self.out)
    }
}

impl Transport for RecordingTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let resp = self.inner.post_json(path, body)?;
        self.fixture
            .lock()
            .unwrap()
            .insert(path, body.clone(), resp.clone());
        Ok(resp)
    }
}
