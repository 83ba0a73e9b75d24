//! Per-block researcher: resolves a breakdown item to geometry and
//! parameters through a single `resolve_geojson` tool.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Map, Value};
use storymap_core::canonical::{format_float, sha256_hex, to_canonical_string};
use storymap_core::geometry::{difference, extent, sphere::haversine, union};
use storymap_core::{
    BlockArgs, BlockKind, BoundingBox, ChatMessage, GeoAction, GeoPoint, GeoShape, GeocodeRequest, Geometry,
    OrbitDirection, ResearchSession, SceneBreakdown, SceneBreakdownItem, ShapeKind, TravelMode, MAX_ZOOM,
};
use thiserror::Error;

use crate::geocoder::{select_best, GeocodeError, Geocoder};
use crate::llm::{parse_tool_call, AgentRole, ChatRequest, ChatResponse, Gateway, LlmError, ToolSchema};
use crate::prompts;

pub const TOOL_NAME: &str = "resolve_geojson";
/// Longest allowed hop between consecutive generated waypoints.
pub const MAX_HOP_KM: f64 = 2000.0;
pub const MAX_REPAIRS: usize = 1;

#[derive(Debug, Error)]
pub enum ResearchError {
    #[error("action failed: {0}")]
    ActionFailed(String),
    #[error("message is empty")]
    EmptyMessage,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Geocode(#[from] GeocodeError),
}

fn request_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "q": {"type": "string"},
            "country_codes": {"type": "array", "items": {"type": "string"}},
            "viewbox": {"type": "array", "items": {"type": "number"}},
            "bounded": {"type": "boolean"}
        },
        "required": ["q"]
    })
}

fn action_properties() -> Map<String, Value> {
    let props = json!({
        "action": {"type": "string", "enum": ["query", "addition", "reduction", "generation"]},
        "query": request_schema(),
        "sub_queries": {"type": "array", "items": request_schema()},
        "base": request_schema(),
        "mask": request_schema(),
        "waypoints": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"lat": {"type": "number"}, "lon": {"type": "number"}},
                "required": ["lat", "lon"]
            }
        },
        "mode": {"type": "string", "enum": ["sea", "air", "land"]}
    });
    match props {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

pub fn tool() -> ToolSchema {
    let mut props = action_properties();
    props.insert(
        "from_action".into(),
        json!({"type": "object", "properties": action_properties(), "required": ["action"]}),
    );
    props.insert(
        "params".into(),
        json!({
            "type": "object",
            "properties": {
                "label": {"type": "string"},
                "color": {"type": "string"},
                "opacity": {"type": "number"},
                "zoom_level": {"type": "number"},
                "sweep": {"type": "number"},
                "direction": {"type": "string", "enum": ["cw", "ccw"]},
                "start_bearing": {"type": "number"},
                "sprite": {"type": "string"},
                "cluster_count": {"type": "integer"},
                "image": {"type": "string"},
                "stats": {"type": "string"}
            }
        }),
    );
    props.insert("citations".into(), json!({"type": "array", "items": {"type": "string"}}));
    ToolSchema {
        name: TOOL_NAME.into(),
        description: "Resolve the block's geography with one action and choose its parameters.".into(),
        parameters: json!({"type": "object", "properties": props, "required": ["action"]}),
    }
}

fn decode_request(v: &Value) -> Result<GeocodeRequest, String> {
    let q = v.get("q").and_then(Value::as_str).unwrap_or_default();
    let mut req = GeocodeRequest::new(q.trim());
    req.country_codes = v
        .get("country_codes")
        .and_then(Value::as_array)
        .map(|cs| {
            cs.iter()
                .filter_map(Value::as_str)
                .map(|c| c.trim().to_ascii_lowercase())
                .collect()
        })
        .unwrap_or_default();
    if let Some(vb) = v.get("viewbox").and_then(Value::as_array) {
        let n: Vec<f64> = vb.iter().filter_map(Value::as_f64).collect();
        if n.len() != 4 {
            return Err(format!("viewbox for `{q}` needs [min_lon, min_lat, max_lon, max_lat]"));
        }
        let bbox = BoundingBox::new(GeoPoint::new(n[1], n[0]), GeoPoint::new(n[3], n[2]));
        req = req.viewbox(bbox, v.get("bounded").and_then(Value::as_bool).unwrap_or(false));
    }
    req.check()?;
    Ok(req)
}

/// Builds a [`GeoAction`] from coerced tool arguments.
pub fn decode_action(v: &Value) -> Result<GeoAction, String> {
    let field = |name: &str| v.get(name).filter(|x| !x.is_null());
    let action = v.get("action").and_then(Value::as_str).unwrap_or_default();
    let need = |name: &str| field(name).ok_or_else(|| format!("{action} action needs `{name}`"));
    let a = match action {
        "query" => GeoAction::Query {
            request: decode_request(need("query")?)?,
        },
        "addition" => GeoAction::Addition {
            sub_queries: need("sub_queries")?
                .as_array()
                .into_iter()
                .flatten()
                .map(decode_request)
                .collect::<Result<_, _>>()?,
        },
        "reduction" => GeoAction::Reduction {
            base: decode_request(need("base")?)?,
            mask: decode_request(need("mask")?)?,
        },
        "generation" => GeoAction::Generation {
            waypoints: need("waypoints")?
                .as_array()
                .into_iter()
                .flatten()
                .map(|w| {
                    GeoPoint::new(
                        w.get("lat").and_then(Value::as_f64).unwrap_or(f64::NAN),
                        w.get("lon").and_then(Value::as_f64).unwrap_or(f64::NAN),
                    )
                })
                .collect(),
            mode: serde_json::from_value::<TravelMode>(need("mode")?.clone()).map_err(|e| e.to_string())?,
        },
        other => return Err(format!("unknown action `{other}`")),
    };
    a.check()?;
    Ok(a)
}

/// Checks generated waypoints: coordinates in range and every hop shorter
/// than [`MAX_HOP_KM`]. Indices in messages are 1-based.
pub fn check_waypoints(waypoints: &[GeoPoint]) -> Result<(), String> {
    if waypoints.len() < 2 {
        return Err("generation needs at least 2 waypoints".into());
    }
    if let Some(i) = waypoints.iter().position(|p| !p.is_valid()) {
        let p = waypoints[i];
        return Err(format!("waypoint {} ({}, {}) is out of range", i + 1, p.lat, p.lon));
    }
    for (i, w) in waypoints.windows(2).enumerate() {
        let d = haversine(w[0], w[1]);
        if d >= MAX_HOP_KM {
            return Err(format!(
                "hop {} is {:.0} km long; consecutive waypoints must be under {MAX_HOP_KM:.0} km apart",
                i + 1,
                d
            ));
        }
    }
    Ok(())
}

async fn lookup(geocoder: &Geocoder, req: &GeocodeRequest) -> Result<(GeoShape, String), ResearchError> {
    let results = match geocoder.geocode(req).await {
        Ok(r) => r,
        Err(GeocodeError::InvalidRequest(m)) => return Err(ResearchError::ActionFailed(m)),
        Err(GeocodeError::Unsupported(m)) => {
            return Err(ResearchError::ActionFailed(format!("query `{}`: {m}", req.query)))
        }
        Err(e) => return Err(e.into()),
    };
    let best = select_best(&results)
        .ok_or_else(|| ResearchError::ActionFailed(format!("query `{}` returned no results", req.query)))?;
    Ok((best.shape.clone(), best.citation()))
}

/// Runs an action against the geocoder and geometry kernel. Returns the
/// shape and provenance citations.
pub async fn execute_action(geocoder: &Geocoder, action: &GeoAction) -> Result<(GeoShape, Vec<String>), ResearchError> {
    let failed = |e: storymap_core::GeometryError| ResearchError::ActionFailed(e.to_string());
    let (shape, cites) = match action {
        GeoAction::Query { request } => {
            let (shape, cite) = lookup(geocoder, request).await?;
            (shape, vec![cite])
        }
        GeoAction::Addition { sub_queries } => {
            let mut shapes = Vec::new();
            let mut cites = Vec::new();
            for q in sub_queries {
                let (s, c) = lookup(geocoder, q).await?;
                if !s.is_areal() {
                    return Err(ResearchError::ActionFailed(format!("query `{}` is not an area", q.query)));
                }
                shapes.push(s);
                cites.push(c);
            }
            (union(&shapes).map_err(failed)?, cites)
        }
        GeoAction::Reduction { base, mask } => {
            let (b, bc) = lookup(geocoder, base).await?;
            let (m, mc) = lookup(geocoder, mask).await?;
            if !b.is_areal() || !m.is_areal() {
                return Err(ResearchError::ActionFailed(
                    "reduction needs an area for both base and mask".into(),
                ));
            }
            let shape = difference(&b, &m).map_err(failed)?;
            if shape.is_empty() {
                return Err(ResearchError::ActionFailed(format!(
                    "removing `{}` from `{}` leaves nothing",
                    mask.query, base.query
                )));
            }
            (shape, vec![bc, mc])
        }
        GeoAction::Generation { waypoints, mode } => {
            check_waypoints(waypoints).map_err(ResearchError::ActionFailed)?;
            let mode = serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            (
                GeoShape::line(waypoints.clone()),
                vec![format!("generated {mode} route through {} waypoints", waypoints.len())],
            )
        }
    };
    shape.validate().map_err(failed)?;
    Ok((shape, cites))
}

static ZOOM_IN_TEXT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bzoom(?:\s+level)?\s*(?:of|to|at|:|=)?\s*(\d+(?:\.\d+)?)").unwrap());

/// Zoom level written in a description, such as "zoom level 10".
pub fn zoom_in_text(text: &str) -> Option<f64> {
    ZOOM_IN_TEXT
        .captures(text)
        .and_then(|c| c[1].parse::<f64>().ok())
        .filter(|z| (0.0..=MAX_ZOOM).contains(z))
}

/// A zoom level that fits `bbox` on screen.
fn zoom_for(bbox: &BoundingBox) -> f64 {
    let span = bbox.width().max(bbox.height() * 2.0);
    if span < 1e-3 {
        return 12.0;
    }
    ((360.0 / span).log2() - 0.5).clamp(1.0, 16.0).round()
}

fn item_seed(id: &str) -> u64 {
    let h = sha256_hex(id.as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex")
}

fn outline(shape: &GeoShape) -> Option<GeoShape> {
    match &shape.geometry {
        Geometry::Line(_) => Some(shape.clone()),
        Geometry::Polygon(p) => Some(GeoShape::line(p.exterior().to_vec())),
        Geometry::MultiPolygon(ps) => ps
            .iter()
            .max_by_key(|p| p.exterior().len())
            .map(|p| GeoShape::line(p.exterior().to_vec())),
        Geometry::Point(_) => None,
    }
}

/// Turns resolved geometry and params into block arguments for `item`.
pub fn build_args(
    item: &SceneBreakdownItem,
    shape: &GeoShape,
    from_shape: Option<&GeoShape>,
    params: &Map<String, Value>,
) -> Result<BlockArgs, String> {
    let num = |k: &str| params.get(k).and_then(Value::as_f64);
    let text = |k: &str| params.get(k).and_then(Value::as_str).map(str::to_string);
    let (bbox, centroid) = extent(shape).map_err(|e| e.to_string())?;
    let zoom = |bbox: &BoundingBox| {
        num("zoom_level")
            .or_else(|| zoom_in_text(&item.long_description))
            .unwrap_or_else(|| zoom_for(bbox))
    };
    let need_from = || {
        from_shape.ok_or_else(|| format!("{} needs from_action for the starting place", item.kind))
    };
    let args = match item.kind {
        BlockKind::HighlightArea => {
            if !shape.is_areal() {
                return Err(format!("{} needs an area, got a {:?}", item.kind, shape.kind()).to_lowercase());
            }
            BlockArgs::HighlightArea { shape: shape.clone() }
        }
        BlockKind::HighlightLine => BlockArgs::HighlightLine {
            path: outline(shape).ok_or("highlight_line needs a line, got a point")?,
        },
        BlockKind::HighlightPoint => BlockArgs::HighlightPoint { point: centroid },
        BlockKind::CameraZoom => BlockArgs::CameraZoom {
            target: centroid,
            zoom_level: zoom(&bbox),
        },
        BlockKind::CameraTranslate => {
            let (from_box, from) = extent(need_from()?).map_err(|e| e.to_string())?;
            let both = BoundingBox::around([from_box.min, from_box.max, bbox.min, bbox.max]).expect("non-empty");
            BlockArgs::CameraTranslate {
                from,
                to: centroid,
                zoom_level: zoom(&both),
            }
        }
        BlockKind::CameraOrbit => BlockArgs::CameraOrbit {
            center: centroid,
            zoom_level: zoom(&bbox),
            sweep: num("sweep").unwrap_or(360.0),
            direction: match text("direction").as_deref() {
                Some("ccw") => OrbitDirection::Ccw,
                _ => OrbitDirection::Cw,
            },
            start_bearing: num("start_bearing"),
        },
        BlockKind::ElementRoute => {
            if shape.kind() != ShapeKind::Line {
                return Err("element_route needs a line; use generation with waypoints".into());
            }
            BlockArgs::ElementRoute {
                path: shape.clone(),
                sprite: text("sprite"),
            }
        }
        BlockKind::ElementSpatialTransition => {
            let from = need_from()?;
            if !shape.is_areal() || !from.is_areal() {
                return Err("element_spatial_transition needs areas for both shapes".into());
            }
            BlockArgs::ElementSpatialTransition {
                from_shape: from.clone(),
                to_shape: shape.clone(),
            }
        }
        BlockKind::ElementAuxiliaryMotion => BlockArgs::ElementAuxiliaryMotion {
            region: bbox,
            cluster_count: params
                .get("cluster_count")
                .and_then(Value::as_u64)
                .map(|n| n as u32)
                .unwrap_or(6),
            sprite: text("sprite").unwrap_or_else(|| "dot".into()),
            seed: item_seed(&item.id),
        },
    };
    let errs = args.check();
    if errs.is_empty() {
        Ok(args)
    } else {
        Err(errs.join("; "))
    }
}

fn param_strings(params: &Map<String, Value>) -> BTreeMap<String, String> {
    params
        .iter()
        .filter_map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.as_f64().map(format_float)?,
                Value::Bool(b) => b.to_string(),
                _ => return None,
            };
            Some((k.clone(), s))
        })
        .collect()
}

fn apply_style(item: &mut SceneBreakdownItem, params: &Map<String, Value>) {
    let text = |k: &str| params.get(k).and_then(Value::as_str).map(str::to_string);
    if let Some(c) = text("color") {
        item.style.color = Some(c);
    }
    if let Some(o) = params.get("opacity").and_then(Value::as_f64) {
        item.style.opacity = Some(o.clamp(0.0, 1.0));
    }
    if let Some(l) = text("label") {
        item.style.label = Some(l);
    }
    if let Some(i) = text("image") {
        item.style.image = Some(i);
    }
}

/// Research state after a request: the session and the (possibly updated) item.
#[derive(Debug, Clone, PartialEq)]
pub struct Research {
    pub session: ResearchSession,
    pub item: SceneBreakdownItem,
}

/// Result of one chat turn.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatTurn {
    pub session: ResearchSession,
    pub item: SceneBreakdownItem,
    pub reply: String,
    /// New shape and params when the turn re-resolved the block.
    pub updated: Option<(GeoShape, BTreeMap<String, String>)>,
}

enum Outcome {
    Resolved { reply: String },
    Text(String),
    Failed(String),
}

pub struct Researcher<'a> {
    pub gateway: &'a Gateway,
    pub geocoder: &'a Geocoder,
}

fn describe(item: &SceneBreakdownItem, context: &SceneBreakdown) -> String {
    let mut s = format!(
        "Block `{}` ({}).\nShort description: {}\nLong description: {}\n",
        item.id, item.kind, item.short_description, item.long_description
    );
    if !item.user_notes.trim().is_empty() {
        s.push_str(&format!("User notes: {}\n", item.user_notes.trim()));
    }
    s.push_str("\nThe whole plan, for context:\n");
    for (n, i) in context.items.iter().enumerate() {
        s.push_str(&format!("{}. [{}] {}\n", n + 1, i.kind, i.short_description));
    }
    s
}

fn call_record(name: &str, arguments: &Value) -> String {
    to_canonical_string(&json!({"tool": name, "arguments": arguments})).expect("json value")
}

impl<'a> Researcher<'a> {
    pub fn new(gateway: &'a Gateway, geocoder: &'a Geocoder) -> Self {
        Self { gateway, geocoder }
    }

    /// Starts a session for `item` and tries to resolve it. A second failed
    /// attempt is recorded on the session and leaves the item unresolved.
    pub async fn research_block(
        &self,
        item: &SceneBreakdownItem,
        context: &SceneBreakdown,
    ) -> Result<Research, ResearchError> {
        let mut session = ResearchSession::new(item.id.clone());
        session.messages.push(ChatMessage::system(prompts::researcher_for(item.kind)));
        session.messages.push(ChatMessage::user(describe(item, context)));
        let mut item = item.clone();
        self.converse(&mut session, &mut item, true).await?;
        Ok(Research { session, item })
    }

    /// Resolves every unresolved item, in order.
    pub async fn research_all(
        &self,
        breakdown: &SceneBreakdown,
    ) -> Result<(SceneBreakdown, Vec<ResearchSession>), ResearchError> {
        let mut out = breakdown.clone();
        let mut sessions = Vec::new();
        for n in 0..out.items.len() {
            if out.items[n].resolved {
                continue;
            }
            let r = self.research_block(&out.items[n], breakdown).await?;
            out.items[n] = r.item;
            sessions.push(r.session);
        }
        Ok((out, sessions))
    }

    /// One follow-up message. The model may just answer, or call the tool
    /// again to replace the block's geometry.
    pub async fn chat(
        &self,
        session: &ResearchSession,
        item: &SceneBreakdownItem,
        message: &str,
    ) -> Result<ChatTurn, ResearchError> {
        if message.trim().is_empty() {
            return Err(ResearchError::EmptyMessage);
        }
        let mut session = session.clone();
        let mut item = item.clone();
        session.messages.push(ChatMessage::user(message.trim()));
        let (reply, updated) = match self.converse(&mut session, &mut item, false).await? {
            Outcome::Text(t) => (t, None),
            Outcome::Failed(e) => (format!("I could not update the geometry: {e}"), None),
            Outcome::Resolved { reply } => {
                let shape = session.resolved_shape.clone().expect("set on success");
                (reply, Some((shape, session.resolved_params.clone())))
            }
        };
        Ok(ChatTurn {
            session,
            item,
            reply,
            updated,
        })
    }

    async fn converse(
        &self,
        session: &mut ResearchSession,
        item: &mut SceneBreakdownItem,
        require_call: bool,
    ) -> Result<Outcome, ResearchError> {
        let tool = tool();
        let mut repairs = 0;
        loop {
            let req = ChatRequest::new(
                self.gateway.model_id(AgentRole::Researcher),
                session.messages.clone(),
                vec![tool.clone()],
            );
            let failure = match self.gateway.complete(AgentRole::Researcher, &req).await {
                Ok(resp) => match self.attempt(&resp, &tool, session, item, require_call).await? {
                    Ok(outcome) => return Ok(outcome),
                    Err(f) => f,
                },
                Err(LlmError::SchemaViolation { message, raw }) => {
                    session.messages.push(ChatMessage::assistant(raw));
                    message
                }
                Err(e) => return Err(e.into()),
            };
            if repairs >= MAX_REPAIRS {
                tracing::warn!(block = %item.id, "research failed: {failure}");
                session.error = Some(failure.clone());
                return Ok(Outcome::Failed(failure));
            }
            repairs += 1;
            session.messages.push(ChatMessage::user(format!(
                "That did not work: {failure}. Call {TOOL_NAME} again with a corrected action."
            )));
        }
    }

    /// Reads one response. The outer `Err` is a hard failure; the inner one
    /// is a failure the model gets a chance to repair.
    async fn attempt(
        &self,
        resp: &ChatResponse,
        tool: &ToolSchema,
        session: &mut ResearchSession,
        item: &mut SceneBreakdownItem,
        require_call: bool,
    ) -> Result<Result<Outcome, String>, ResearchError> {
        let call = match parse_tool_call(resp, tool) {
            Ok(c) => c,
            Err(LlmError::MissingCall { .. }) => {
                let text = resp.text.clone().unwrap_or_default();
                session.messages.push(ChatMessage::assistant(text.clone()));
                return Ok(if require_call {
                    Err(format!("the reply did not call {TOOL_NAME}"))
                } else {
                    Ok(Outcome::Text(text))
                });
            }
            Err(LlmError::SchemaViolation { message, raw }) => {
                session.messages.push(ChatMessage::assistant(raw));
                return Ok(Err(message));
            }
            Err(e) => return Err(e.into()),
        };
        session.messages.push(ChatMessage::assistant(call_record(&call.name, &call.arguments)));
        let args = &call.arguments;

        let action = match decode_action(args) {
            Ok(a) => a,
            Err(e) => return Ok(Err(e)),
        };
        let from_action = match args.get("from_action").filter(|v| !v.is_null()) {
            Some(v) => match decode_action(v) {
                Ok(a) => Some(a),
                Err(e) => return Ok(Err(format!("from_action: {e}"))),
            },
            None => None,
        };
        let (shape, mut cites) = match execute_action(self.geocoder, &action).await {
            Ok(r) => r,
            Err(ResearchError::ActionFailed(m)) => return Ok(Err(m)),
            Err(e) => return Err(e),
        };
        let from_shape = match &from_action {
            Some(a) => match execute_action(self.geocoder, a).await {
                Ok((s, c)) => {
                    cites.extend(c);
                    Some(s)
                }
                Err(ResearchError::ActionFailed(m)) => return Ok(Err(format!("from_action: {m}"))),
                Err(e) => return Err(e),
            },
            None => None,
        };
        let empty = Map::new();
        let params = args.get("params").and_then(Value::as_object).unwrap_or(&empty);
        let block_args = match build_args(item, &shape, from_shape.as_ref(), params) {
            Ok(a) => a,
            Err(e) => return Ok(Err(e)),
        };

        let mut citations: Vec<String> = args
            .get("citations")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect();
        for c in cites {
            if !citations.contains(&c) {
                citations.push(c);
            }
        }
        session.chosen_action = Some(action);
        session.from_action = from_action;
        session.resolved_shape = Some(shape);
        session.resolved_params = param_strings(params);
        session.citations = citations;
        session.error = None;
        apply_style(item, params);
        item.resolve(block_args);
        let reply = match resp.text.as_deref().map(str::trim) {
            Some(t) if !t.is_empty() => t.to_string(),
            _ => format!("Resolved {} for {}.", item.kind, item.short_description),
        };
        Ok(Ok(Outcome::Resolved { reply }))
    }
}
