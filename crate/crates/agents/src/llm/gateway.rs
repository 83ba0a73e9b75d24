use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{to_wire, ChatRequest, ChatResponse, LlmError};
use super::http::HttpBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Breakdown,
    Researcher,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Breakdown => "breakdown",
            AgentRole::Researcher => "researcher",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode {other:?} (expected live, record or replay)")),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        }
    }
}

/// Failure from a chat backend, before any response parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendError {
    /// HTTP status, or `None` for transport failures.
    pub status: Option<u16>,
    pub retry_after: Option<Duration>,
    pub message: String,
}

impl BackendError {
    pub fn retryable(&self) -> bool {
        match self.status {
            None => true,
            Some(s) => s == 408 || s == 429 || s >= 500,
        }
    }
}

/// Sends a wire request body and returns the raw response body.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn send(&self, body: &serde_json::Value) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Waits before each retry; the initial attempt is not counted.
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff: [1, 2, 4].map(Duration::from_secs).to_vec(),
        }
    }
}

struct Endpoint {
    model_id: String,
    backend: Option<Arc<dyn ChatBackend>>,
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub prompt_hash: String,
    pub request_hash: String,
    pub body_hash: String,
    pub request: String,
    pub response: String,
}

const RESPONSE_MARKER: &str = "\n--- response\n";

impl Fixture {
    pub fn render(&self) -> String {
        format!(
            "prompt-sha256: {}\nrequest-sha256: {}\nbody-sha256: {}\n--- request\n{}{RESPONSE_MARKER}{}",
            self.prompt_hash, self.request_hash, self.body_hash, self.request, self.response
        )
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (head, response) = text.split_once(RESPONSE_MARKER)?;
        let (headers, request) = head.split_once("--- request\n")?;
        let field = |name: &str| {
            headers
                .lines()
                .find_map(|l| l.strip_prefix(name).map(|v| v.trim().to_string()))
        };
        Some(Self {
            prompt_hash: field("prompt-sha256:")?,
            request_hash: field("request-sha256:")?,
            body_hash: field("body-sha256:")?,
            request: request.to_string(),
            response: response.to_string(),
        })
    }
}

/// Routes chat requests per agent role through live, record or replay
/// transports. Fixtures live at `<fixtures_dir>/<role>/<request hash>.txt`.
pub struct Gateway {
    mode: Mode,
    fixtures_dir: PathBuf,
    endpoints: [Endpoint; 2],
    retry: RetryPolicy,
    network_calls: AtomicUsize,
}

pub const DEFAULT_BREAKDOWN_MODEL: &str = "o1";
pub const DEFAULT_RESEARCHER_MODEL: &str = "sonar-pro";

impl Gateway {
    pub fn new(mode: Mode, fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            fixtures_dir: fixtures_dir.into(),
            endpoints: [
                Endpoint {
                    model_id: DEFAULT_BREAKDOWN_MODEL.into(),
                    backend: None,
                },
                Endpoint {
                    model_id: DEFAULT_RESEARCHER_MODEL.into(),
                    backend: None,
                },
            ],
            retry: RetryPolicy::default(),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn replay(fixtures_dir: impl Into<PathBuf>) -> Self {
        Self::new(Mode::Replay, fixtures_dir)
    }

    pub fn with_model(mut self, role: AgentRole, model_id: impl Into<String>) -> Self {
        self.endpoints[role.index()].model_id = model_id.into();
        self
    }

    pub fn with_backend(mut self, role: AgentRole, backend: Arc<dyn ChatBackend>) -> Self {
        self.endpoints[role.index()].backend = Some(backend);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn from_config(cfg: &LlmConfig) -> Self {
        let mut g = Self::new(cfg.mode, &cfg.fixtures_dir)
            .with_model(AgentRole::Breakdown, &cfg.breakdown_model)
            .with_model(AgentRole::Researcher, &cfg.researcher_model);
        if cfg.mode != Mode::Replay {
            g = g
                .with_backend(
                    AgentRole::Breakdown,
                    Arc::new(HttpBackend::new(&cfg.breakdown_base_url, cfg.breakdown_api_key.clone())),
                )
                .with_backend(
                    AgentRole::Researcher,
                    Arc::new(HttpBackend::new(&cfg.researcher_base_url, cfg.researcher_api_key.clone())),
                );
        }
        g
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn model_id(&self, role: AgentRole) -> &str {
        &self.endpoints[role.index()].model_id
    }

    pub fn fixtures_dir(&self) -> &Path {
        &self.fixtures_dir
    }

    /// Provider calls made so far (attempts, including retries).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn fixture_path(&self, role: AgentRole, hash: &str) -> PathBuf {
        self.fixtures_dir.join(role.as_str()).join(format!("{hash}.txt"))
    }

    pub async fn complete(&self, role: AgentRole, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.check().map_err(LlmError::InvalidRequest)?;
        let hash = req.hash();
        let resp = match self.mode {
            Mode::Replay => {
                let raw = self.load_fixture(role, req, &hash)?;
                ChatResponse::from_wire(&raw)?
            }
            Mode::Live | Mode::Record => {
                let started = Instant::now();
                let raw = self.send_with_retry(role, req).await?;
                if self.mode == Mode::Record {
                    self.write_fixture(role, req, &hash, &raw)?;
                }
                let mut resp = ChatResponse::from_wire(&raw)?;
                resp.latency_ms = started.elapsed().as_millis() as u64;
                resp
            }
        };
        validate_calls(req, &resp)?;
        Ok(resp)
    }

    fn load_fixture(&self, role: AgentRole, req: &ChatRequest, hash: &str) -> Result<String, LlmError> {
        let path = self.fixture_path(role, hash);
        match std::fs::read_to_string(&path) {
            Ok(text) => Fixture::parse(&text)
                .map(|f| f.response)
                .ok_or_else(|| LlmError::Parse {
                    message: format!("malformed fixture {}", path.display()),
                    raw: text,
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(self.miss(role, req, hash)),
            Err(e) => Err(e.into()),
        }
    }

    /// A miss is reported as prompt drift when a fixture exists for the same
    /// request body under a different system prompt.
    fn miss(&self, role: AgentRole, req: &ChatRequest, hash: &str) -> LlmError {
        let body = req.body_hash();
        let current = req.prompt_hash();
        let dir = self.fixtures_dir.join(role.as_str());
        let drifted = std::fs::read_dir(&dir).ok().and_then(|entries| {
            entries
                .filter_map(Result::ok)
                .filter_map(|e| std::fs::read_to_string(e.path()).ok())
                .filter_map(|t| Fixture::parse(&t))
                .find(|f| f.body_hash == body && f.prompt_hash != current)
        });
        match drifted {
            Some(f) => LlmError::PromptDrift {
                agent: role.as_str().into(),
                hash: hash.into(),
                recorded: f.prompt_hash,
                current,
            },
            None => LlmError::FixtureMissing {
                agent: role.as_str().into(),
                hash: hash.into(),
            },
        }
    }

    fn write_fixture(&self, role: AgentRole, req: &ChatRequest, hash: &str, raw: &str) -> Result<(), LlmError> {
        let fixture = Fixture {
            prompt_hash: req.prompt_hash(),
            request_hash: hash.to_string(),
            body_hash: req.body_hash(),
            request: storymap_core::canonical::to_canonical_pretty(req)
                .expect("requests hold only finite numbers"),
            response: raw.to_string(),
        };
        let path = self.fixture_path(role, hash);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, fixture.render())?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    async fn send_with_retry(&self, role: AgentRole, req: &ChatRequest) -> Result<String, LlmError> {
        let backend = self.endpoints[role.index()]
            .backend
            .clone()
            .ok_or_else(|| LlmError::NotConfigured(role.as_str().into()))?;
        let body = to_wire(req);
        let mut attempt = 0;
        loop {
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            match backend.send(&body).await {
                Ok(raw) => return Ok(raw),
                Err(e) if e.retryable() && attempt < self.retry.backoff.len() => {
                    let wait = e.retry_after.unwrap_or(self.retry.backoff[attempt]);
                    tracing::warn!(agent = role.as_str(), ?wait, "retrying after {}", e.message);
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
                Err(e) => {
                    return Err(match e.status {
                        Some(status) => LlmError::Provider {
                            status,
                            message: e.message,
                            retry_after_secs: e.retry_after.map(|d| d.as_secs()),
                        },
                        None => LlmError::Network(e.message),
                    })
                }
            }
        }
    }
}

/// Every tool call must name a declared tool and satisfy its schema.
fn validate_calls(req: &ChatRequest, resp: &ChatResponse) -> Result<(), LlmError> {
    for call in &resp.tool_calls {
        let tool = req
            .tools
            .iter()
            .find(|t| t.name == call.name)
            .ok_or_else(|| LlmError::SchemaViolation {
                message: format!("call to undeclared tool {}", call.name),
                raw: call.raw_arguments.clone(),
            })?;
        super::parse_tool_call(resp, tool)?;
    }
    Ok(())
}

/// Gateway settings read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub mode: Mode,
    pub fixtures_dir: PathBuf,
    pub breakdown_base_url: String,
    pub breakdown_api_key: Option<String>,
    pub breakdown_model: String,
    pub researcher_base_url: String,
    pub researcher_api_key: Option<String>,
    pub researcher_model: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            fixtures_dir: PathBuf::from("fixtures"),
            breakdown_base_url: "https://api.openai.com/v1".into(),
            breakdown_api_key: None,
            breakdown_model: DEFAULT_BREAKDOWN_MODEL.into(),
            researcher_base_url: "https://api.perplexity.ai".into(),
            researcher_api_key: None,
            researcher_model: DEFAULT_RESEARCHER_MODEL.into(),
        }
    }
}

impl LlmConfig {
    /// Reads `LLM_MODE`, `LLM_FIXTURES_DIR`, `LLM_BASE_URL`, `LLM_API_KEY`,
    /// `LLM_MODEL`, `RESEARCH_LLM_BASE_URL`, `RESEARCH_LLM_API_KEY` and
    /// `RESEARCH_LLM_MODEL`.
    pub fn from_env() -> Result<Self, String> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let d = Self::default();
        Ok(Self {
            mode: var("LLM_MODE").map(|m| m.parse()).transpose()?.unwrap_or(d.mode),
            fixtures_dir: var("LLM_FIXTURES_DIR").map(PathBuf::from).unwrap_or(d.fixtures_dir),
            breakdown_base_url: var("LLM_BASE_URL").unwrap_or(d.breakdown_base_url),
            breakdown_api_key: var("LLM_API_KEY"),
            breakdown_model: var("LLM_MODEL").unwrap_or(d.breakdown_model),
            researcher_base_url: var("RESEARCH_LLM_BASE_URL").unwrap_or(d.researcher_base_url),
            researcher_api_key: var("RESEARCH_LLM_API_KEY"),
            researcher_model: var("RESEARCH_LLM_MODEL").unwrap_or(d.researcher_model),
        })
    }
}
