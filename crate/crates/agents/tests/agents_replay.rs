mod common;

use common::replay;
use common::scenarios::*;
use storymap_agents::llm::{AgentRole, ChatRequest, Fixture, Gateway};
use storymap_agents::{breakdown, compile, regenerate, BreakdownError, ResearchError, Researcher};
use storymap_core::geometry::{contains, extent, sphere::haversine};
use storymap_core::validators::route_deviation_km;
use storymap_core::{
    BlockArgs, BlockKind, GeoAction, GeoPoint, GeoShape, Geometry, Role, SceneBreakdown, TravelMode,
};

fn kinds(b: &SceneBreakdown) -> Vec<BlockKind> {
    b.items.iter().map(|i| i.kind).collect()
}

fn ids(b: &SceneBreakdown) -> Vec<&str> {
    b.items.iter().map(|i| i.id.as_str()).collect()
}

async fn mace_resolved(gw: &Gateway, geo: &storymap_agents::geocoder::Geocoder) -> SceneBreakdown {
    let plan = breakdown(gw, &script("mace"), &opts()).await.unwrap();
    Researcher::new(gw, geo).research_all(&plan).await.unwrap().0
}

#[tokio::test]
async fn mace_breakdown_follows_the_four_steps() {
    let (gw, _) = replay();
    let b = breakdown(&gw, &script("mace"), &opts()).await.unwrap();
    assert_eq!(
        kinds(&b),
        [
            BlockKind::CameraZoom,
            BlockKind::ElementRoute,
            BlockKind::CameraZoom,
            BlockKind::HighlightArea
        ]
    );
    assert!(b.items[0].long_description.contains("London"));
    assert!(b.items[1].long_description.contains("Atlantic"));
    assert!(b.items[2].long_description.contains("Toronto"));
    assert!(b.items[3].long_description.contains("Toronto"));
    assert_eq!(ids(&b), ["item-1", "item-2", "item-3", "item-4"]);
    assert!(b.items.iter().all(|i| !i.short_description.is_empty() && !i.long_description.is_empty()));
    assert_eq!(gw.network_calls(), 0);
}

#[tokio::test]
async fn mace_pipeline_resolves_and_compiles_identically_twice() {
    let (gw, geo) = replay();
    let a = mace_resolved(&gw, &geo).await;
    let b = mace_resolved(&gw, &geo).await;
    assert!(a.items.iter().all(|i| i.resolved));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let t = compile(&a, &opts()).unwrap();
    assert!(storymap_core::validate_timeline(&t).is_valid());
    assert_eq!(t.duration(), 30.0);
    assert_eq!(compile(&b, &opts()).unwrap(), t);
}

#[tokio::test]
async fn columbus_plan_has_a_camera_and_a_route() {
    let (gw, _) = replay();
    let b = breakdown(&gw, &script("columbus"), &opts()).await.unwrap();
    assert!(b.items.iter().any(|i| i.kind.is_camera()));
    assert!(b.items.iter().any(|i| i.kind == BlockKind::ElementRoute));
}

#[tokio::test]
async fn empty_script_never_reaches_the_gateway() {
    // An empty fixtures dir would report a missing fixture if consulted.
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::replay(dir.path());
    assert!(matches!(breakdown(&gw, "  \n", &opts()).await, Err(BreakdownError::EmptyScript)));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[tokio::test]
async fn malformed_plans_are_repaired() {
    let (gw, _) = replay();
    let b = breakdown(&gw, &script("nile"), &opts()).await.unwrap();
    assert_eq!(kinds(&b), [BlockKind::CameraZoom, BlockKind::HighlightLine]);
    assert!(!b.items[0].long_description.is_empty());
}

#[tokio::test]
async fn repairs_are_capped_and_keep_the_raw_output() {
    let (gw, _) = replay();
    match breakdown(&gw, &script("rome"), &opts()).await {
        Err(BreakdownError::Failed { message, raw }) => {
            assert!(message.contains("kind"), "{message}");
            assert!(raw.contains("Show Rome."), "{raw}");
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn regenerate_after_delete_drops_the_item() {
    let (gw, _) = replay();
    let mace = script("mace");
    let plan = breakdown(&gw, &mace, &opts()).await.unwrap();
    let out = regenerate(&gw, &plan, &delete_route(), &mace, &opts()).await.unwrap();
    assert!(out.item("item-2").is_none());
    assert_eq!(ids(&out), ["item-1", "item-3", "item-4"]);
}

#[tokio::test]
async fn regenerate_keeps_a_user_reordering() {
    let (gw, _) = replay();
    let mace = script("mace");
    let plan = breakdown(&gw, &mace, &opts()).await.unwrap();
    let out = regenerate(&gw, &plan, &swap_first_two(), &mace, &opts()).await.unwrap();
    assert_eq!(ids(&out), ["item-2", "item-1", "item-3", "item-4"]);
}

#[tokio::test]
async fn zoom_edit_flows_through_to_the_compiled_block() {
    let (gw, geo) = replay();
    let mace = script("mace");
    let resolved = mace_resolved(&gw, &geo).await;
    let before = compile(&resolved, &opts()).unwrap();
    assert!(matches!(before.block("item-3").unwrap().args, BlockArgs::CameraZoom { zoom_level, .. } if zoom_level == 11.0));

    let edited = regenerate(&gw, &resolved, &toronto_zoom_10(), &mace, &opts()).await.unwrap();
    assert!(!edited.item("item-3").unwrap().resolved);
    assert!(edited.item("item-1").unwrap().resolved, "untouched items keep their research");
    let (edited, sessions) = Researcher::new(&gw, &geo).research_all(&edited).await.unwrap();
    assert_eq!(sessions.len(), 1);
    let t = compile(&edited, &opts()).unwrap();
    match &t.block("item-3").unwrap().args {
        BlockArgs::CameraZoom { zoom_level, .. } => assert_eq!(*zoom_level, 10.0),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn noted_items_survive_regeneration() {
    let (gw, _) = replay();
    let mace = script("mace");
    let plan = breakdown(&gw, &mace, &opts()).await.unwrap();
    let out = regenerate(&gw, &plan, &note_on_highlight(), &mace, &opts()).await.unwrap();
    let kept = out.item("item-4").expect("noted item kept");
    assert_eq!(kept.kind, BlockKind::HighlightArea);
    assert_eq!(kept.user_notes, "Fill Toronto in gold.");
}

#[tokio::test]
async fn historical_state_is_an_addition_covering_both_parts() {
    let (gw, geo) = replay();
    let item = andhra();
    let r = Researcher::new(&gw, &geo).research_block(&item, &alone(&item)).await.unwrap();
    let queries: Vec<String> = match r.session.chosen_action.clone().unwrap() {
        GeoAction::Addition { sub_queries } => {
            assert!(sub_queries.iter().all(|q| q.country_codes == ["in"]));
            sub_queries.into_iter().map(|q| q.query).collect()
        }
        other => panic!("{other:?}"),
    };
    assert_eq!(queries, ["Telangana, India", "Andhra Pradesh, India"]);
    let shape = r.session.resolved_shape.clone().unwrap();
    assert_eq!(shape.polygons().len(), 1, "shared border merges into one polygon");

    // Every sampled point of either part lies in the union.
    let parts = ["Telangana, India", "Andhra Pradesh, India"];
    let mut checked = 0;
    for q in parts {
        let req = storymap_core::GeocodeRequest::new(q).countries(["in"]);
        let part = geo.geocode(&req).await.unwrap().remove(0).shape;
        let (bbox, _) = extent(&part).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let p = GeoPoint::new(
                    bbox.min.lat + (i as f64 + 0.5) / 40.0 * bbox.height(),
                    bbox.min.lon + (j as f64 + 0.5) / 40.0 * bbox.width(),
                );
                if contains(&part, p) {
                    assert!(contains(&shape, p), "{p:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
    assert!(r.item.resolved);
    assert!(matches!(r.item.args, Some(BlockArgs::HighlightArea { .. })));
    assert_eq!(r.item.style.label.as_deref(), Some("Andhra Pradesh (until 2014)"));
}

#[tokio::test]
async fn landmark_resolves_inside_toronto() {
    let (gw, geo) = replay();
    let item = legislature();
    let r = Researcher::new(&gw, &geo).research_block(&item, &alone(&item)).await.unwrap();
    assert!(matches!(r.session.chosen_action, Some(GeoAction::Query { .. })));
    let toronto = geo
        .geocode(&storymap_core::GeocodeRequest::new("Toronto, Ontario, Canada").countries(["ca"]))
        .await
        .unwrap()
        .remove(0);
    let (bbox, _) = extent(&toronto.shape).unwrap();
    match r.item.args {
        Some(BlockArgs::HighlightPoint { point }) => assert!(bbox.contains(point), "{point:?}"),
        other => panic!("{other:?}"),
    }
    assert!(r.session.citations.iter().any(|c| c.contains("wikipedia")));
    assert!(r.session.citations.iter().any(|c| c.contains("OpenStreetMap")));
}

#[tokio::test]
async fn informational_chat_leaves_geometry_alone() {
    let (gw, geo) = replay();
    let researcher = Researcher::new(&gw, &geo);
    let item = legislature();
    let r = researcher.research_block(&item, &alone(&item)).await.unwrap();
    let turn = researcher.chat(&r.session, &r.item, ASK_BUILDING_YEAR).await.unwrap();
    assert!(turn.reply.contains("1893"));
    assert!(turn.updated.is_none());
    assert_eq!(turn.session.resolved_shape, r.session.resolved_shape);
    assert_eq!(turn.item, r.item);
    assert_eq!(turn.session.messages.len(), r.session.messages.len() + 2);
    assert_eq!(&turn.session.messages[..r.session.messages.len()], &r.session.messages[..]);
}

#[tokio::test]
async fn empty_chat_message_is_rejected() {
    let (gw, geo) = replay();
    let researcher = Researcher::new(&gw, &geo);
    let item = legislature();
    let r = researcher.research_block(&item, &alone(&item)).await.unwrap();
    assert!(matches!(
        researcher.chat(&r.session, &r.item, "   ").await,
        Err(ResearchError::EmptyMessage)
    ));
}

#[tokio::test]
async fn chat_reduction_removes_the_canadian_part() {
    let (gw, geo) = replay();
    let researcher = Researcher::new(&gw, &geo);
    let item = rockies();
    let r = researcher.research_block(&item, &alone(&item)).await.unwrap();
    let full = r.session.resolved_shape.clone().unwrap();
    let turn = researcher.chat(&r.session, &r.item, REMOVE_CANADA).await.unwrap();
    let (shape, _) = turn.updated.clone().expect("geometry replaced");
    assert!(matches!(turn.session.chosen_action, Some(GeoAction::Reduction { .. })));
    assert_eq!(turn.session.resolved_shape.as_ref(), Some(&shape));
    assert!(turn.session.messages.len() > r.session.messages.len());

    let canada = geo
        .geocode(&storymap_core::GeocodeRequest::new("Canada").countries(["ca"]))
        .await
        .unwrap()
        .remove(0)
        .shape;
    // Vertices on the shared border count as outside; nudge them south.
    for v in shape.vertices() {
        assert!(!contains(&canada, GeoPoint::new(v.lat - 1e-6, v.lon)), "{v:?}");
    }
    let (bbox, _) = extent(&full).unwrap();
    let mut inside = 0;
    for i in 0..60 {
        for j in 0..60 {
            let p = GeoPoint::new(
                bbox.min.lat + (i as f64 + 0.5) / 60.0 * bbox.height(),
                bbox.min.lon + (j as f64 + 0.5) / 60.0 * bbox.width(),
            );
            if contains(&shape, p) {
                inside += 1;
                assert!(!contains(&canada, p), "{p:?}");
            }
        }
    }
    assert!(inside > 100);
}

#[tokio::test]
async fn unresolvable_block_is_left_to_the_user() {
    let (gw, geo) = replay();
    let item = atlantis();
    let r = Researcher::new(&gw, &geo).research_block(&item, &alone(&item)).await.unwrap();
    assert!(!r.item.resolved);
    assert!(r.item.args.is_none());
    let err = r.session.error.clone().unwrap();
    assert!(err.contains("no results"), "{err}");
    assert!(r.session.resolved_shape.is_none());
    // The repair prompt carries the first failure.
    assert!(r
        .session
        .messages
        .iter()
        .any(|m| m.role == Role::User && m.content.contains("`Atlantis` returned no results")));
}

#[tokio::test]
async fn spatial_transition_is_repaired_then_resolved() {
    let (gw, geo) = replay();
    let item = dakotas();
    let r = Researcher::new(&gw, &geo).research_block(&item, &alone(&item)).await.unwrap();
    assert!(r.session.error.is_none());
    match r.item.args {
        Some(BlockArgs::ElementSpatialTransition { from_shape, to_shape }) => {
            let a = storymap_core::geometry::area(&from_shape).unwrap();
            let b = storymap_core::geometry::area(&to_shape).unwrap();
            assert!(b > 1.8 * a, "{a} {b}");
            assert_eq!(to_shape.polygons().len(), 1);
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn generated_routes_match_reference_routes() {
    let (gw, geo) = replay();
    let refs: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixtures_dir().join("reference_routes.json")).unwrap(),
    )
    .unwrap();
    for name in ["mace", "columbus"] {
        let plan = breakdown(&gw, &script(name), &opts()).await.unwrap();
        let (resolved, sessions) = Researcher::new(&gw, &geo).research_all(&plan).await.unwrap();
        let route = resolved.items.iter().find(|i| i.kind == BlockKind::ElementRoute).unwrap();
        let session = sessions.iter().find(|s| s.block_id == route.id).unwrap();
        match &session.chosen_action {
            Some(GeoAction::Generation { waypoints, mode }) => {
                assert_eq!(*mode, TravelMode::Sea);
                assert!(waypoints.len() >= 4);
                assert!(waypoints.windows(2).all(|w| haversine(w[0], w[1]) < 2000.0));
            }
            other => panic!("{other:?}"),
        }
        let path = match &route.args {
            Some(BlockArgs::ElementRoute { path, .. }) => path.vertices(),
            other => panic!("{other:?}"),
        };
        let reference = GeoShape::from_geojson(&serde_json::json!({"type": "LineString", "coordinates": refs[name]}))
            .unwrap();
        assert!(matches!(reference.geometry, Geometry::Line(_)));
        let d = route_deviation_km(&path, &reference.vertices());
        assert!(d < 1.0, "{name}: {d} km");
    }
}

fn fixtures(role: &str) -> Vec<Fixture> {
    let dir = fixtures_dir().join(role);
    let mut out: Vec<Fixture> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| Fixture::parse(&std::fs::read_to_string(e.unwrap().path()).unwrap()).unwrap())
        .collect();
    out.sort_by(|a, b| a.request_hash.cmp(&b.request_hash));
    out
}

#[test]
fn researcher_requests_expose_exactly_one_tool() {
    let all = fixtures("researcher");
    assert!(!all.is_empty());
    for f in all {
        let req: ChatRequest = serde_json::from_str(&f.request).unwrap();
        assert_eq!(req.tools.len(), 1);
        assert_eq!(req.tools[0].name, "resolve_geojson");
        assert_eq!(req.hash(), f.request_hash);
    }
}

#[test]
fn recorded_prompts_match_the_shipped_prompts() {
    let breakdown_hash = storymap_core::canonical::sha256_hex(storymap_agents::prompts::BREAKDOWN.as_bytes());
    for f in fixtures("breakdown") {
        assert_eq!(f.prompt_hash, breakdown_hash, "breakdown prompt changed; re-author fixtures");
    }
    let researcher: Vec<String> = BlockKind::ALL
        .iter()
        .map(|k| storymap_core::canonical::sha256_hex(storymap_agents::prompts::researcher_for(*k).as_bytes()))
        .collect();
    for f in fixtures("researcher") {
        assert!(researcher.contains(&f.prompt_hash), "researcher prompt changed; re-author fixtures");
    }
}

#[test]
fn breakdown_requests_carry_the_planning_rules() {
    for f in fixtures("breakdown") {
        let req: ChatRequest = serde_json::from_str(&f.request).unwrap();
        assert_eq!(req.model_id, "o1");
        assert_eq!(req.tools.len(), 1);
        assert_eq!(req.tools[0].name, "emit_breakdown");
        let system = &req.messages[0];
        assert_eq!(system.role, Role::System);
        assert!(system.content.contains("camera block before every highlight or animated element"));
        let _ = AgentRole::Breakdown;
    }
}
