use std::time::Duration;

use serde_json::Value;

use super::{Transport, TransportError};

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

/// Blocking JSON-over-HTTP(S) transport with optional bearer auth.
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            base_url: base_url.into(),
            api_key,
        }
    }

    /// Reads the API key from the first set, non-empty variable in `vars`.
    pub fn with_env_key(base_url: impl Into<String>, vars: &[&str], timeout: Duration) -> Self {
        let key = vars
            .iter()
            .filter_map(|v| std::env::var(v).ok())
            .find(|k| !k.is_empty());
        Self::new(base_url, key, timeout)
    }

    fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            path.trim_start_matches('/')
        )
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let mut req = self
            .agent
            .post(&self.url(path))
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(status) => TransportError::Status {
                status,
                body: String::new(),
            },
            ureq::Error::Json(e) => TransportError::Decode(e.to_string()),
            other => TransportError::Io(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let body = resp
                .body_mut()
                .with_config()
                .limit(64 * 1024)
                .read_to_string()
                .unwrap_or_default();
            return Err(TransportError::Status { status, body });
        }
        resp.body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_json::<Value>()
            .map_err(|e| match e {
                ureq::Error::Json(e) => TransportError::Decode(e.to_string()),
                other => TransportError::Io(other.to_string()),
            })
    }
}
