use std::time::Duration;

use async_trait::async_trait;

use super::gateway::{BackendError, ChatBackend};

/// Agent endpoints may take this long before the call is abandoned.
pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

/// Chat-completions over HTTP with bearer auth.
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .expect("http client");
        Self {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn send(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| BackendError {
            status: None,
            retry_after: None,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.text().await.map_err(|e| BackendError {
            status: None,
            retry_after: None,
            message: e.to_string(),
        })?;
        if status.is_success() {
            Ok(text)
        } else {
            Err(BackendError {
                status: Some(status.as_u16()),
                retry_after,
                message: text,
            })
        }
    }
}
