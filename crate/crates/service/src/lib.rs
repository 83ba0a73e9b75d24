//! HTTP facade over the authoring pipeline, backed by a file-per-project store.

pub mod api;
pub mod assets;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use storymap_agents::geocoder::{Geocoder, GeocoderConfig};
use storymap_agents::llm::{Gateway, LlmConfig, Mode};
use storymap_core::ids::{Clock, IdGenerator, SystemClock};

pub use api::router;
pub use assets::AssetStore;
pub use error::{ApiError, ErrorCode};
pub use store::{ProjectStore, StoreError, Stored};

/// Agent endpoints give up after this long when talking to a live provider.
pub const AGENT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind_addr: SocketAddr,
    pub llm: LlmConfig,
    pub geocoder: GeocoderConfig,
}

impl ServiceConfig {
    /// Reads `DATA_DIR` and `BIND_ADDR` plus the gateway and geocoder variables.
    pub fn from_env() -> Result<Self, String> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let bind_addr = var("BIND_ADDR").unwrap_or_else(|| "127.0.0.1:8080".into());
        Ok(Self {
            data_dir: var("DATA_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data")),
            bind_addr: bind_addr
                .parse()
                .map_err(|_| format!("BIND_ADDR: bad address {bind_addr:?}"))?,
            llm: LlmConfig::from_env()?,
            geocoder: GeocoderConfig::from_env()?,
        })
    }
}

/// Shared by every request handler.
pub struct AppState {
    pub store: ProjectStore,
    pub assets: AssetStore,
    pub gateway: Gateway,
    pub geocoder: Geocoder,
    clock: Arc<dyn Clock>,
    ids: IdGenerator,
}

impl AppState {
    pub fn open(data_dir: &Path, gateway: Gateway, geocoder: Geocoder) -> Result<Self, StoreError> {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let now = clock.now_ms();
        Ok(Self {
            store: ProjectStore::open(data_dir)?,
            assets: AssetStore::open(data_dir)?,
            gateway,
            geocoder,
            ids: IdGenerator::new(now, now),
            clock,
        })
    }

    /// State built from environment-style configuration.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, StoreError> {
        let gateway = Gateway::from_config(&cfg.llm);
        let geocoder = Geocoder::from_config(&cfg.geocoder, cfg.llm.mode, &cfg.llm.fixtures_dir, Some(&cfg.data_dir))?;
        Self::open(&cfg.data_dir, gateway, geocoder)
    }

    /// Fixes timestamps and id generation, for reproducible runs.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>, seed: u64) -> Self {
        self.ids = IdGenerator::new(clock.now_ms(), seed);
        self.clock = clock;
        self
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn next_id(&self) -> String {
        self.ids.next_id()
    }

    pub fn agent_timeout(&self) -> Option<Duration> {
        (self.gateway.mode() != Mode::Replay).then_some(AGENT_TIMEOUT)
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, mode = state.gateway.mode().as_str(), "listening");
    axum::serve(listener, router(Arc::new(state))).await
}
