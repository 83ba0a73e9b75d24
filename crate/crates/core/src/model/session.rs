use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geo::{BoundingBox, GeoPoint, GeoShape};

/// A Nominatim search request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeRequest {
    pub query: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub country_codes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewbox: Option<BoundingBox>,
    #[serde(default)]
    pub bounded: bool,
    #[serde(default = "default_true")]
    pub want_polygon: bool,
}

fn default_true() -> bool {
    true
}

impl GeocodeRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            country_codes: Vec::new(),
            viewbox: None,
            bounded: false,
            want_polygon: true,
        }
    }

    pub fn countries<I, S>(mut self, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.country_codes = codes.into_iter().map(Into::into).collect();
        self
    }

    pub fn viewbox(mut self, bbox: BoundingBox, bounded: bool) -> Self {
        self.viewbox = Some(bbox);
        self.bounded = bounded;
        self
    }

    pub fn check(&self) -> Result<(), String> {
        if self.query.trim().is_empty() {
            return Err("geocode query is empty".into());
        }
        for c in &self.country_codes {
            if c.len() != 2 || !c.chars().all(|ch| ch.is_ascii_lowercase()) {
                return Err(format!(
                    "country code `{c}` must be two lowercase letters"
                ));
            }
        }
        if let Some(vb) = &self.viewbox {
            vb.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelMode {
    Sea,
    Air,
    Land,
}

/// How the researcher obtains geometry for a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GeoAction {
    /// Direct geocoder lookup.
    Query { request: GeocodeRequest },
    /// Union of several lookups.
    Addition { sub_queries: Vec<GeocodeRequest> },
    /// `base` minus `mask`.
    Reduction {
        base: GeocodeRequest,
        mask: GeocodeRequest,
    },
    /// Model-proposed waypoints, used when nothing is queryable.
    Generation {
        waypoints: Vec<GeoPoint>,
        mode: TravelMode,
    },
}

impl GeoAction {
    pub fn name(&self) -> &'static str {
        match self {
            GeoAction::Query { .. } => "query",
            GeoAction::Addition { .. } => "addition",
            GeoAction::Reduction { .. } => "reduction",
            GeoAction::Generation { .. } => "generation",
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match self {
            GeoAction::Query { request } => request.check(),
            GeoAction::Addition { sub_queries } => {
                if sub_queries.len() < 2 {
                    return Err("addition needs at least 2 sub-queries".into());
                }
                sub_queries.iter().try_for_each(GeocodeRequest::check)
            }
            GeoAction::Reduction { base, mask } => {
                base.check()?;
                mask.check()
            }
            GeoAction::Generation { waypoints, .. } => {
                if waypoints.len() < 2 {
                    return Err("generation needs at least 2 waypoints".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Per-block researcher conversation and what it resolved. Append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchSession {
    pub block_id: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_action: Option<GeoAction>,
    /// Source shape for spatial transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_action: Option<GeoAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_shape: Option<GeoShape>,
    #[serde(default)]
    pub resolved_params: BTreeMap<String, String>,
    #[serde(default)]
    pub citations: Vec<String>,
    /// Last failure, cleared when a later tool call succeeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResearchSession {
    pub fn new(block_id: impl Into<String>) -> Self {
        Self {
            block_id: block_id.into(),
            messages: Vec::new(),
            chosen_action: None,
            from_action: None,
            resolved_shape: None,
            resolved_params: BTreeMap::new(),
            citations: Vec::new(),
            error: None,
        }
    }
}
