use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use storymap_core::canonical::sha256_hex;

use super::GeocodeError;

/// Fetches the raw search response body for a query string.
#[async_trait]
pub trait GeocodeTransport: Send + Sync {
    async fn search(&self, query: &str) -> Result<String, GeocodeError>;

    /// Whether requests reach the upstream service (and so are rate limited).
    fn is_network(&self) -> bool;
}

pub struct HttpTransport {
    client: reqwest::Client,
    base_url: String,
}

impl HttpTransport {
    pub fn new(base_url: &str, user_agent: &str) -> Self {
        let client = reqwest::Client::builder()
            .user_agent(user_agent)
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .expect("http client");
        Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }
}

#[async_trait]
impl GeocodeTransport for HttpTransport {
    async fn search(&self, query: &str) -> Result<String, GeocodeError> {
        let url = format!("{}/search?{query}", self.base_url);
        let resp = self
            .client
            .get(&url)
            .send()
            .await
            .map_err(|e| GeocodeError::Network(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| GeocodeError::Network(e.to_string()))?;
        if status.is_success() {
            Ok(body)
        } else {
            Err(GeocodeError::Http {
                status: status.as_u16(),
                body,
            })
        }
    }

    fn is_network(&self) -> bool {
        true
    }
}

const RESPONSE_MARKER: &str = "\n--- response\n";

/// Fixture file for `query` under `dir`.
pub fn fixture_path(dir: &std::path::Path, query: &str) -> PathBuf {
    dir.join(format!("{}.txt", sha256_hex(query.as_bytes())))
}

pub fn render_fixture(query: &str, body: &str) -> String {
    format!("query: {query}{RESPONSE_MARKER}{body}")
}

/// Serves recorded responses from `fixtures/geocoder`; never touches the network.
pub struct ReplayTransport {
    dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

#[async_trait]
impl GeocodeTransport for ReplayTransport {
    async fn search(&self, query: &str) -> Result<String, GeocodeError> {
        let path = fixture_path(&self.dir, query);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(GeocodeError::FixtureMissing {
                    query: query.to_string(),
                    path: path.display().to_string(),
                })
            }
            Err(e) => return Err(GeocodeError::Io(e.to_string())),
        };
        text.split_once(RESPONSE_MARKER)
            .map(|(_, body)| body.to_string())
            .ok_or_else(|| GeocodeError::Parse {
                message: format!("malformed fixture {}", path.display()),
                raw: text.clone(),
            })
    }

    fn is_network(&self) -> bool {
        false
    }
}

/// Forwards to an inner transport and writes each response as a fixture.
pub struct RecordTransport {
    inner: Arc<dyn GeocodeTransport>,
    dir: PathBuf,
}

impl RecordTransport {
    pub fn new(inner: Arc<dyn GeocodeTransport>, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }
}

#[async_trait]
impl GeocodeTransport for RecordTransport {
    async fn search(&self, query: &str) -> Result<String, GeocodeError> {
        let body = self.inner.search(query).await?;
        let io = |e: std::io::Error| GeocodeError::Io(e.to_string());
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        std::fs::write(fixture_path(&self.dir, query), render_fixture(query, &body)).map_err(io)?;
        Ok(body)
    }

    fn is_network(&self) -> bool {
        self.inner.is_network()
    }
}
