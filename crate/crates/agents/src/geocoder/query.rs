use storymap_core::canonical::format_float;
use storymap_core::GeocodeRequest;
use url::form_urlencoded::byte_serialize;

/// Search query string in fixed parameter order:
/// `q, format, polygon_geojson, countrycodes, viewbox, bounded`.
pub fn build_query(req: &GeocodeRequest) -> Result<String, String> {
    req.check()?;
    let mut parts = vec![
        format!("q={}", byte_serialize(req.query.trim().as_bytes()).collect::<String>()),
        "format=geojson".to_string(),
    ];
    if req.want_polygon {
        parts.push("polygon_geojson=1".into());
    }
    if !req.country_codes.is_empty() {
        parts.push(format!("countrycodes={}", req.country_codes.join(",")));
    }
    if let Some(b) = &req.viewbox {
        parts.push(format!(
            "viewbox={},{},{},{}",
            format_float(b.min.lon),
            format_float(b.min.lat),
            format_float(b.max.lon),
            format_float(b.max.lat)
        ));
    }
    if req.bounded {
        parts.push("bounded=1".into());
    }
    Ok(parts.join("&"))
}
