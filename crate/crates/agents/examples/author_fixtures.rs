//! Regenerates the checked-in replay fixtures.
//!
//! Runs every recorded scenario in record mode against a scripted chat
//! backend and a static geocoder. Responses are hand-authored and simplified
//! geometries stand in for real boundaries.
//!
//!     cargo run -p storymap-agents --example author_fixtures

#[path = "../tests/common/scenarios.rs"]
mod scenarios;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};
use storymap_agents::geocoder::{GeocodeError, GeocodeTransport, Geocoder, RecordTransport};
use storymap_agents::llm::{AgentRole, BackendError, ChatBackend, Gateway, Mode};
use storymap_agents::{breakdown, compile, regenerate, Researcher};
use storymap_core::canonical::to_canonical_pretty;

use scenarios::*;

/// Pops one prepared response per request.
#[derive(Default)]
struct Scripted {
    queue: Mutex<VecDeque<String>>,
}

impl Scripted {
    fn push(&self, body: String) {
        self.queue.lock().unwrap().push_back(body);
    }

    fn call(&self, name: &str, arguments: Value) {
        self.push(wire(None, Some((name, arguments))));
    }

    fn text(&self, text: &str) {
        self.push(wire(Some(text), None));
    }

    fn left(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

#[async_trait]
impl ChatBackend for Scripted {
    async fn send(&self, _body: &Value) -> Result<String, BackendError> {
        self.queue.lock().unwrap().pop_front().ok_or_else(|| BackendError {
            status: Some(500),
            retry_after: None,
            message: "scripted backend ran out of responses".into(),
        })
    }
}

fn wire(text: Option<&str>, call: Option<(&str, Value)>) -> String {
    let mut message = json!({"role": "assistant", "content": text});
    if let Some((name, args)) = call {
        message["tool_calls"] = json!([{
            "id": "call_0",
            "type": "function",
            "function": {"name": name, "arguments": args.to_string()}
        }]);
    }
    json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": message, "finish_reason": if text.is_some() { "stop" } else { "tool_calls" }}],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0}
    })
    .to_string()
}

/// Answers searches from a table keyed by the `q` parameter.
struct Static;

fn feature(name: &str, importance: f64, geometry: Value) -> Value {
    json!({"type": "Feature", "properties": {"display_name": name, "importance": importance}, "geometry": geometry})
}

fn polygon(ring: &[(f64, f64)]) -> Value {
    let mut coords: Vec<[f64; 2]> = ring.iter().map(|&(lon, lat)| [lon, lat]).collect();
    coords.push(coords[0]);
    json!({"type": "Polygon", "coordinates": [coords]})
}

const TELANGANA_ANDHRA_BORDER: [(f64, f64); 6] = [
    (77.30, 15.90),
    (78.20, 16.05),
    (79.30, 16.60),
    (80.10, 16.85),
    (80.90, 17.30),
    (81.40, 17.80),
];

const DAKOTA_BORDER: [(f64, f64); 2] = [(-104.05, 45.94), (-96.56, 45.94)];

fn search(q: &str) -> Option<Vec<Value>> {
    let f = match q {
        "London, United Kingdom" => feature(
            "London, Greater London, England, United Kingdom",
            0.93,
            polygon(&[
                (-0.51, 51.47),
                (-0.42, 51.35),
                (-0.15, 51.29),
                (0.15, 51.30),
                (0.33, 51.45),
                (0.22, 51.63),
                (-0.05, 51.69),
                (-0.35, 51.62),
            ]),
        ),
        "Toronto, Ontario, Canada" => feature(
            "Toronto, Golden Horseshoe, Ontario, Canada",
            0.86,
            polygon(&[
                (-79.64, 43.58),
                (-79.39, 43.62),
                (-79.12, 43.77),
                (-79.17, 43.86),
                (-79.42, 43.86),
                (-79.64, 43.75),
            ]),
        ),
        "Ontario Legislative Building, Toronto" => feature(
            "Ontario Legislative Building, 111 Wellesley Street West, Queen's Park, Toronto, Ontario, Canada",
            0.52,
            json!({"type": "Point", "coordinates": [-79.3920, 43.6625]}),
        ),
        "Telangana, India" => {
            let mut ring = TELANGANA_ANDHRA_BORDER.to_vec();
            ring.extend([
                (80.90, 18.60),
                (80.20, 19.40),
                (79.20, 19.90),
                (78.10, 19.70),
                (77.40, 18.60),
                (77.20, 17.20),
            ]);
            feature("Telangana, India", 0.74, polygon(&ring))
        }
        "Andhra Pradesh, India" => {
            let mut ring = TELANGANA_ANDHRA_BORDER.to_vec();
            ring.extend([
                (82.60, 18.40),
                (84.75, 19.05),
                (83.30, 17.60),
                (82.30, 16.60),
                (81.10, 15.80),
                (80.10, 15.20),
                (80.20, 13.80),
                (80.30, 13.40),
                (79.20, 13.00),
                (78.40, 12.70),
                (77.00, 13.90),
                (77.10, 15.20),
            ]);
            feature("Andhra Pradesh, India", 0.73, polygon(&ring))
        }
        "North Dakota, United States" => {
            let mut ring = DAKOTA_BORDER.to_vec();
            ring.extend([(-96.60, 46.50), (-96.84, 47.60), (-97.23, 49.00), (-104.05, 49.00)]);
            feature("North Dakota, United States", 0.78, polygon(&ring))
        }
        "South Dakota, United States" => {
            let mut ring: Vec<(f64, f64)> = DAKOTA_BORDER.iter().rev().copied().collect();
            ring.extend([(-104.05, 43.00), (-98.50, 43.00), (-97.00, 42.77), (-96.45, 42.49), (-96.45, 43.50)]);
            feature("South Dakota, United States", 0.77, polygon(&ring))
        }
        "Rocky Mountains" => feature(
            "Rocky Mountains",
            0.71,
            polygon(&[
                (-105.0, 35.0),
                (-104.6, 38.5),
                (-105.0, 41.5),
                (-106.5, 44.5),
                (-110.0, 47.5),
                (-113.0, 49.0),
                (-114.0, 51.0),
                (-117.0, 54.0),
                (-121.0, 57.5),
                (-124.0, 59.8),
                (-126.5, 58.5),
                (-122.0, 54.5),
                (-118.5, 51.0),
                (-116.5, 49.0),
                (-114.5, 46.0),
                (-112.0, 43.5),
                (-111.0, 40.0),
                (-109.0, 37.0),
                (-107.0, 35.0),
            ]),
        ),
        "Canada" => feature(
            "Canada",
            0.95,
            polygon(&[
                (-141.0, 70.0),
                (-141.0, 60.0),
                (-130.0, 55.0),
                (-123.3, 49.0),
                (-95.15, 49.0),
                (-83.0, 42.0),
                (-67.0, 44.5),
                (-52.6, 47.5),
                (-60.0, 60.0),
                (-80.0, 73.0),
                (-120.0, 76.0),
            ]),
        ),
        "Palos de la Frontera, Spain" => feature(
            "Palos de la Frontera, Huelva, Andalusia, Spain",
            0.55,
            json!({"type": "Point", "coordinates": [-6.8931, 37.2281]}),
        ),
        "The Bahamas" => feature(
            "The Bahamas",
            0.84,
            polygon(&[
                (-79.0, 27.3),
                (-77.0, 27.0),
                (-74.0, 24.0),
                (-72.7, 21.2),
                (-73.7, 20.9),
                (-76.0, 22.5),
                (-78.5, 23.5),
                (-79.5, 25.5),
            ]),
        ),
        "River Avon" => feature(
            "River Avon, Bristol, England, United Kingdom",
            0.45,
            json!({"type": "LineString", "coordinates": [
                [-2.10, 51.58], [-2.12, 51.46], [-2.20, 51.35], [-2.36, 51.38],
                [-2.50, 51.42], [-2.60, 51.45], [-2.71, 51.50]
            ]}),
        ),
        "Atlantis" | "Atlantis, Atlantic Ocean" => return Some(Vec::new()),
        _ => return None,
    };
    Some(vec![f])
}

#[async_trait]
impl GeocodeTransport for Static {
    async fn search(&self, query: &str) -> Result<String, GeocodeError> {
        let q = url::form_urlencoded::parse(query.as_bytes())
            .find(|(k, _)| k == "q")
            .map(|(_, v)| v.into_owned())
            .unwrap_or_default();
        let features = search(&q).ok_or_else(|| GeocodeError::Network(format!("no static answer for {q:?}")))?;
        Ok(json!({"type": "FeatureCollection", "features": features}).to_string())
    }

    fn is_network(&self) -> bool {
        false
    }
}

fn q(text: &str, cc: &str) -> Value {
    if cc.is_empty() {
        json!({"q": text})
    } else {
        json!({"q": text, "country_codes": [cc]})
    }
}

fn item(kind: &str, short: &str, long: &str) -> Value {
    json!({"kind": kind, "short_description": short, "long_description": long})
}

fn with_id(id: &str, mut v: Value) -> Value {
    v["id"] = json!(id);
    v
}

const MACE_ROUTE: [(f64, f64); 16] = [
    (51.507, -0.128),
    (51.47, 0.75),
    (51.05, 1.55),
    (50.45, -1.0),
    (49.95, -5.5),
    (48.9, -15.0),
    (47.9, -27.0),
    (47.2, -39.0),
    (46.4, -50.5),
    (47.2, -59.5),
    (49.0, -64.0),
    (48.6, -68.6),
    (46.81, -71.2),
    (45.5, -73.55),
    (44.2, -76.45),
    (43.64, -79.38),
];

const COLUMBUS_ROUTE: [(f64, f64); 6] = [
    (37.2281, -6.8931),
    (28.1, -15.4),
    (26.0, -30.0),
    (25.0, -45.0),
    (24.5, -60.0),
    (24.1, -74.5),
];

fn waypoints(route: &[(f64, f64)]) -> Value {
    route.iter().map(|&(lat, lon)| json!({"lat": lat, "lon": lon})).collect()
}

/// Reference polylines for the route check: the recorded waypoints with a
/// midpoint inserted on every hop.
fn reference(route: &[(f64, f64)]) -> Value {
    let mut out = Vec::new();
    for w in route.windows(2) {
        out.push(json!([w[0].1, w[0].0]));
        out.push(json!([(w[0].1 + w[1].1) / 2.0, (w[0].0 + w[1].0) / 2.0]));
    }
    let last = route[route.len() - 1];
    out.push(json!([last.1, last.0]));
    Value::Array(out)
}

fn mace_breakdown(s: &Scripted) {
    s.call("emit_breakdown", json!({"items": mace_items_json()}));
}

fn mace_items_json() -> Vec<Value> {
    vec![
        item("camera_zoom", "Zoom to London",
             "Fly the camera to London, where the ceremonial mace begins its voyage, at about zoom level 9."),
        item("element_route", "Sail across the Atlantic",
             "A ship carries the mace from London down the Thames, across the Atlantic Ocean and up the St. Lawrence Seaway to Toronto. Sprite: ship. duration: 8 s"),
        item("camera_zoom", "Zoom to Toronto",
             "Fly the camera to Toronto as the ship arrives, at about zoom level 11."),
        item("highlight_area", "Highlight Toronto",
             "Fill the City of Toronto in red with the label Toronto."),
    ]
}

fn mace_research(s: &Scripted) {
    s.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("London, United Kingdom", "gb"),
               "params": {"zoom_level": 9}, "citations": ["https://www.openstreetmap.org"]}),
    );
    s.call(
        "resolve_geojson",
        json!({"action": "generation", "waypoints": waypoints(&MACE_ROUTE), "mode": "sea",
               "params": {"sprite": "ship", "color": "#1f4e79"},
               "citations": ["https://en.wikipedia.org/wiki/Saint_Lawrence_Seaway"]}),
    );
    s.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("Toronto, Ontario, Canada", "ca"), "params": {"zoom_level": 11}}),
    );
    s.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("Toronto, Ontario, Canada", "ca"),
               "params": {"color": "#d62728", "opacity": 0.6, "label": "Toronto"}}),
    );
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> anyhow::Result<()> {
    let dir = fixtures_dir();
    for sub in ["breakdown", "researcher", "geocoder"] {
        let p = dir.join(sub);
        if p.exists() {
            std::fs::remove_dir_all(&p)?;
        }
    }
    let b = Arc::new(Scripted::default());
    let r = Arc::new(Scripted::default());
    let gw = Gateway::new(Mode::Record, &dir)
        .with_backend(AgentRole::Breakdown, b.clone())
        .with_backend(AgentRole::Researcher, r.clone());
    let geo = Geocoder::new(Arc::new(RecordTransport::new(Arc::new(Static), dir.join("geocoder"))))
        .with_min_interval(Duration::ZERO);
    let researcher = Researcher::new(&gw, &geo);
    let opts = opts();

    // Ceremonial mace, end to end.
    let mace = script("mace");
    mace_breakdown(&b);
    let plan = breakdown(&gw, &mace, &opts).await?;
    mace_research(&r);
    let (resolved, _) = researcher.research_all(&plan).await?;
    let timeline = compile(&resolved, &opts)?;
    println!("mace: {} blocks, {} s", timeline.blocks.len(), timeline.duration());

    // Regenerate after deleting the route.
    let mut kept = mace_items_json();
    kept.remove(1);
    let ids = ["item-1", "item-3", "item-4"];
    b.call(
        "emit_breakdown",
        json!({"items": kept.into_iter().zip(ids).map(|(v, id)| with_id(id, v)).collect::<Vec<_>>()}),
    );
    regenerate(&gw, &plan, &delete_route(), &mace, &opts).await?;

    // Regenerate after swapping the first two items.
    let items = mace_items_json();
    b.call(
        "emit_breakdown",
        json!({"items": [
            with_id("item-2", items[1].clone()),
            with_id("item-1", items[0].clone()),
            with_id("item-3", items[2].clone()),
            with_id("item-4", items[3].clone()),
        ]}),
    );
    regenerate(&gw, &plan, &swap_first_two(), &mace, &opts).await?;

    // Edit the Toronto zoom, regenerate, research only that item.
    let mut items = mace_items_json();
    items[2]["long_description"] = json!(TORONTO_ZOOM_10);
    b.call(
        "emit_breakdown",
        json!({"items": items.into_iter().zip(["item-1", "item-2", "item-3", "item-4"]).map(|(v, id)| with_id(id, v)).collect::<Vec<_>>()}),
    );
    let edited = regenerate(&gw, &resolved, &toronto_zoom_10(), &mace, &opts).await?;
    r.call("resolve_geojson", json!({"action": "query", "query": q("Toronto, Ontario, Canada", "ca")}));
    let (edited, _) = researcher.research_all(&edited).await?;
    compile(&edited, &opts)?;

    // A note on the highlight: the first plan drops it and is repaired.
    let items = mace_items_json();
    b.call(
        "emit_breakdown",
        json!({"items": [with_id("item-1", items[0].clone()), with_id("item-2", items[1].clone()), with_id("item-3", items[2].clone())]}),
    );
    b.call(
        "emit_breakdown",
        json!({"items": items.into_iter().zip(["item-1", "item-2", "item-3", "item-4"]).map(|(v, id)| with_id(id, v)).collect::<Vec<_>>()}),
    );
    regenerate(&gw, &plan, &note_on_highlight(), &mace, &opts).await?;

    // Columbus.
    let columbus = script("columbus");
    b.call(
        "emit_breakdown",
        json!({"items": [
            item("camera_zoom", "Zoom to Palos", "Open on the port of Palos de la Frontera in Spain, at about zoom level 8."),
            item("element_route", "Voyage to the Bahamas",
                 "Columbus's ships sail from Palos by way of the Canary Islands across the Atlantic to the Bahamas. Sprite: ship. duration: 8 s"),
            item("camera_zoom", "Zoom to the Bahamas", "Fly the camera to the Bahamas as the ships arrive."),
            item("highlight_area", "Highlight the Bahamas", "Fill the Bahamas in sandy yellow."),
        ]}),
    );
    let cplan = breakdown(&gw, &columbus, &opts).await?;
    r.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("Palos de la Frontera, Spain", "es"), "params": {"zoom_level": 8}}),
    );
    r.call(
        "resolve_geojson",
        json!({"action": "generation", "waypoints": waypoints(&COLUMBUS_ROUTE), "mode": "sea",
               "params": {"sprite": "ship"}, "citations": ["https://en.wikipedia.org/wiki/Voyages_of_Christopher_Columbus"]}),
    );
    r.call("resolve_geojson", json!({"action": "query", "query": q("The Bahamas", "bs"), "params": {"zoom_level": 6}}));
    r.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("The Bahamas", "bs"), "params": {"color": "#e8c872"}}),
    );
    let (cresolved, _) = researcher.research_all(&cplan).await?;
    compile(&cresolved, &opts)?;

    // Breakdown repaired once: an empty long description.
    let nile = script("nile");
    b.call(
        "emit_breakdown",
        json!({"items": [item("camera_zoom", "Zoom to Egypt", ""), item("highlight_line", "Trace the Nile", "Draw the Nile in blue.")]}),
    );
    b.call(
        "emit_breakdown",
        json!({"items": [
            item("camera_zoom", "Zoom to Egypt", "Fly the camera over Egypt at about zoom level 5."),
            item("highlight_line", "Trace the Nile", "Draw the course of the Nile in blue from Sudan to the delta."),
        ]}),
    );
    breakdown(&gw, &nile, &opts).await?;

    // Breakdown that never repairs: the kind is always missing.
    let rome = script("rome");
    for _ in 0..3 {
        b.call(
            "emit_breakdown",
            json!({"items": [{"short_description": "Rome", "long_description": "Show Rome."}]}),
        );
    }
    let failed = breakdown(&gw, &rome, &opts).await;
    println!("rome: {}", failed.map(|_| "unexpected success".to_string()).unwrap_or_else(|e| e.to_string()));

    // Addition.
    let it = andhra();
    r.call(
        "resolve_geojson",
        json!({"action": "addition", "sub_queries": [q("Telangana, India", "IN"), q("Andhra Pradesh, India", "in")],
               "params": {"color": "#2ca02c", "label": "Andhra Pradesh (until 2014)"},
               "citations": ["https://en.wikipedia.org/wiki/Andhra_Pradesh_Reorganisation_Act,_2014"]}),
    );
    researcher.research_block(&it, &alone(&it)).await?;

    // Point, then an informational follow-up.
    let it = legislature();
    r.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("Ontario Legislative Building, Toronto", "ca"),
               "params": {"label": "Ontario Legislative Building"},
               "citations": ["https://en.wikipedia.org/wiki/Ontario_Legislative_Building"]}),
    );
    let session = researcher.research_block(&it, &alone(&it)).await?;
    r.text("The Ontario Legislative Building at Queen's Park opened in 1893.");
    researcher.chat(&session.session, &session.item, ASK_BUILDING_YEAR).await?;

    // Query, then a reduction from chat.
    let it = rockies();
    r.call(
        "resolve_geojson",
        json!({"action": "query", "query": q("Rocky Mountains", ""), "params": {"color": "#8c564b"}}),
    );
    let session = researcher.research_block(&it, &alone(&it)).await?;
    r.call(
        "resolve_geojson",
        json!({"action": "reduction", "base": q("Rocky Mountains", ""), "mask": q("Canada", "ca"),
               "params": {"color": "#8c564b"}}),
    );
    researcher.chat(&session.session, &session.item, REMOVE_CANADA).await?;

    // Nothing to find, twice.
    let it = atlantis();
    r.call("resolve_geojson", json!({"action": "query", "query": q("Atlantis", "")}));
    r.call("resolve_geojson", json!({"action": "query", "query": q("Atlantis, Atlantic Ocean", "")}));
    let lost = researcher.research_block(&it, &alone(&it)).await?;
    println!("atlantis: resolved={} error={:?}", lost.item.resolved, lost.session.error);

    // Spatial transition, repaired once.
    let it = dakotas();
    let nd = q("North Dakota, United States", "us");
    let sd = q("South Dakota, United States", "us");
    r.call(
        "resolve_geojson",
        json!({"action": "addition", "sub_queries": [nd.clone()], "from_action": {"action": "query", "query": nd.clone()}}),
    );
    r.call(
        "resolve_geojson",
        json!({"action": "addition", "sub_queries": [nd.clone(), sd], "from_action": {"action": "query", "query": nd},
               "params": {"color": "#9467bd"}}),
    );
    let d = researcher.research_block(&it, &alone(&it)).await?;
    println!("dakotas: resolved={}", d.item.resolved);

    // Geocoder fixture for the bounded query example.
    let avon = storymap_core::GeocodeRequest::new("River Avon").countries(["gb"]).viewbox(
        storymap_core::BoundingBox::new(storymap_core::GeoPoint::new(51.3, -2.8), storymap_core::GeoPoint::new(51.6, -1.5)),
        true,
    );
    geo.geocode(&avon).await?;

    let routes = json!({"mace": reference(&MACE_ROUTE), "columbus": reference(&COLUMBUS_ROUTE)});
    std::fs::write(dir.join("reference_routes.json"), to_canonical_pretty(&routes)? + "\n")?;

    anyhow::ensure!(b.left() == 0 && r.left() == 0, "unused responses: {} breakdown, {} researcher", b.left(), r.left());
    println!("fixtures written to {}", dir.display());
    Ok(())
}
