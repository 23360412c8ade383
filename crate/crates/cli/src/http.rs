//! Chat-completions transport for theme labeling.

use std::time::Duration;

use prefaudit_core::themes::{EndpointConfig, Transport, TransportError};
use serde_json::{json, Value};

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, endpoint: &EndpointConfig, prompt: &str) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        let body = json!({
            "model": endpoint.model_name,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self
            .client
            .post(&url)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(var) = &endpoint.auth_env_var {
            let token = std::env::var(var).map_err(|_| TransportError(format!("environment variable {var} is not set")))?;
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError(format!("{url}: HTTP {status}")));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError(format!("{url}: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError(format!("{url}: reply has no message content")))
    }
}
