//! Place lookup against a Nominatim-compatible search API.

mod cache;
mod query;
mod transport;

use std::cmp::Ordering;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use storymap_core::geometry::area;
use storymap_core::ids::{Clock, SystemClock};
use storymap_core::{GeoShape, GeocodeRequest, GeometryError};
use thiserror::Error;
use tokio::sync::Mutex;
use tokio::time::Instant;

pub use cache::{CacheEntry, GeocodeCache, CACHE_FILE};
pub use query::build_query;
pub use transport::{
    fixture_path, render_fixture, GeocodeTransport, HttpTransport, RecordTransport, ReplayTransport,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeocodeError {
    #[error("invalid geocode request: {0}")]
    InvalidRequest(String),
    #[error("geocoder unreachable: {0}")]
    Network(String),
    #[error("geocoder returned {status}")]
    Http { status: u16, body: String },
    #[error("unreadable geocoder response: {message}")]
    Parse { message: String, raw: String },
    #[error("{0}")]
    Unsupported(String),
    #[error("no geocoder fixture for `{query}` ({path})")]
    FixtureMissing { query: String, path: String },
    #[error("geocoder i/o: {0}")]
    Io(String),
}

impl GeocodeError {
    pub fn retryable(&self) -> bool {
        match self {
            GeocodeError::Network(_) => true,
            GeocodeError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeResult {
    pub display_name: String,
    pub shape: GeoShape,
    pub importance: f64,
    pub osm_type: String,
    pub osm_id: String,
    pub fetched_at: u64,
}

impl GeocodeResult {
    /// Provenance string for citations.
    pub fn citation(&self) -> String {
        if self.osm_type.is_empty() {
            format!("{} (OpenStreetMap)", self.display_name)
        } else {
            format!("{} (OpenStreetMap {} {})", self.display_name, self.osm_type, self.osm_id)
        }
    }
}

/// The single best match: highest importance, then largest area, then
/// display name. Areas within a part per million count as equal.
pub fn select_best(results: &[GeocodeResult]) -> Option<&GeocodeResult> {
    let area_of = |r: &GeocodeResult| area(&r.shape).unwrap_or(0.0);
    let by_area = |a: f64, b: f64| {
        if (a - b).abs() <= 1e-6 * a.abs().max(b.abs()) {
            Ordering::Equal
        } else {
            b.total_cmp(&a)
        }
    };
    results.iter().min_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then_with(|| by_area(area_of(a), area_of(b)))
            .then_with(|| a.display_name.cmp(&b.display_name))
    })
}

/// Parses a GeoJSON FeatureCollection search response, sorted by
/// importance (descending, stable).
pub fn parse_results(raw: &str, fetched_at: u64) -> Result<Vec<GeocodeResult>, GeocodeError> {
    let parse_err = |message: String| GeocodeError::Parse {
        message,
        raw: raw.to_string(),
    };
    let body: Value = serde_json::from_str(raw).map_err(|e| parse_err(e.to_string()))?;
    let features = body
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("response has no features array".into()))?;
    let mut out = Vec::new();
    let mut unsupported = Vec::new();
    for f in features {
        let geometry = match GeoShape::geometry_from_geojson(f.get("geometry").unwrap_or(&Value::Null)) {
            Ok(g) => g,
            Err(GeometryError::Unsupported(t)) => {
                unsupported.push(t);
                continue;
            }
            Err(e) => {
                tracing::warn!("skipping feature with bad geometry: {e}");
                continue;
            }
        };
        let shape = GeoShape::new(geometry);
        if let Err(e) = shape.validate() {
            tracing::warn!("skipping invalid geometry: {e}");
            continue;
        }
        let props = f.get("properties").cloned().unwrap_or(Value::Null);
        let text = |k: &str| match props.get(k) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => String::new(),
        };
        out.push(GeocodeResult {
            display_name: text("display_name"),
            shape,
            importance: props.get("importance").and_then(Value::as_f64).unwrap_or(0.0),
            osm_type: text("osm_type"),
            osm_id: text("osm_id"),
            fetched_at,
        });
    }
    if out.is_empty() && !unsupported.is_empty() {
        return Err(GeocodeError::Unsupported(format!(
            "unsupported geometry type {}",
            unsupported.join(", ")
        )));
    }
    out.sort_by(|a, b| b.importance.partial_cmp(&a.importance).unwrap_or(Ordering::Equal));
    Ok(out)
}

/// Spaces out upstream requests; callers queue on a single gate.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    pub async fn acquire(&self) {
        let mut next = self.next.lock().await;
        if let Some(at) = *next {
            tokio::time::sleep_until(at).await;
        }
        *next = Some(Instant::now() + self.interval);
    }
}

pub const MIN_REQUEST_INTERVAL: Duration = Duration::from_secs(1);

/// Geocoder settings read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeocoderConfig {
    pub base_url: String,
    pub user_agent: String,
    pub cache_ttl_hours: u64,
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://nominatim.openstreetmap.org".into(),
            user_agent: concat!("storymap/", env!("CARGO_PKG_VERSION"), " (map animation authoring)").into(),
            cache_ttl_hours: 24,
        }
    }
}

impl GeocoderConfig {
    /// Reads `GEOCODER_BASE_URL`, `GEOCODER_USER_AGENT` and `GEOCODER_CACHE_TTL_HOURS`.
    pub fn from_env() -> Result<Self, String> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let d = Self::default();
        Ok(Self {
            base_url: var("GEOCODER_BASE_URL").unwrap_or(d.base_url),
            user_agent: var("GEOCODER_USER_AGENT").unwrap_or(d.user_agent),
            cache_ttl_hours: var("GEOCODER_CACHE_TTL_HOURS")
                .map(|v| v.parse().map_err(|_| format!("GEOCODER_CACHE_TTL_HOURS: bad value {v:?}")))
                .transpose()?
                .unwrap_or(d.cache_ttl_hours),
        })
    }

    pub fn ttl_ms(&self) -> u64 {
        self.cache_ttl_hours * 3_600_000
    }
}

pub struct Geocoder {
    transport: Arc<dyn GeocodeTransport>,
    cache: Option<GeocodeCache>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
}

impl Geocoder {
    pub fn new(transport: Arc<dyn GeocodeTransport>) -> Self {
        Self {
            transport,
            cache: None,
            limiter: RateLimiter::new(MIN_REQUEST_INTERVAL),
            clock: Arc::new(SystemClock),
        }
    }

    /// Replays `fixtures_dir/geocoder`.
    pub fn replay(fixtures_dir: &Path) -> Self {
        Self::new(Arc::new(ReplayTransport::new(fixtures_dir.join("geocoder"))))
    }

    /// Transport chosen by `mode`: replay reads `fixtures_dir/geocoder`,
    /// record writes there while querying upstream. Live and record modes
    /// cache responses under `cache_dir` when given.
    pub fn from_config(
        cfg: &GeocoderConfig,
        mode: crate::llm::Mode,
        fixtures_dir: &Path,
        cache_dir: Option<&Path>,
    ) -> std::io::Result<Self> {
        use crate::llm::Mode;
        let http = || -> Arc<dyn GeocodeTransport> { Arc::new(HttpTransport::new(&cfg.base_url, &cfg.user_agent)) };
        let geo = match mode {
            Mode::Replay => return Ok(Self::replay(fixtures_dir)),
            Mode::Live => Self::new(http()),
            Mode::Record => Self::new(Arc::new(RecordTransport::new(http(), fixtures_dir.join("geocoder")))),
        };
        match cache_dir {
            Some(dir) => Ok(geo.with_cache(GeocodeCache::in_dir(dir, cfg.ttl_ms())?)),
            None => Ok(geo),
        }
    }

    pub fn with_cache(mut self, cache: GeocodeCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.limiter = RateLimiter::new(interval);
        self
    }

    pub async fn geocode(&self, req: &GeocodeRequest) -> Result<Vec<GeocodeResult>, GeocodeError> {
        let key = build_query(req).map_err(GeocodeError::InvalidRequest)?;
        let now = self.clock.now_ms();
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key, now)) {
            return parse_results(&hit.response, hit.fetched_at);
        }
        if self.transport.is_network() {
            self.limiter.acquire().await;
        }
        let raw = self.transport.search(&key).await?;
        let results = parse_results(&raw, now)?;
        if let Some(c) = &self.cache {
            c.put(CacheEntry {
                key,
                response: raw,
                fetched_at: now,
            })
            .map_err(|e| GeocodeError::Io(e.to_string()))?;
        }
        Ok(results)
    }
}
