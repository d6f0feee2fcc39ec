use serde_json::{json, Value};

use super::{Point, SlumGeometry};
use crate::error::{Error, Result};

/// Parses a GeoJSON `FeatureCollection` into validated slum geometry.
///
/// Polygons with `kind = "place"` (or no kind) are places; a `LineString`
/// or `Polygon` with `kind = "exterior"` is the existing-road boundary.
/// Only the outer ring of a polygon is used.
pub fn parse_slum(document: &str) -> Result<SlumGeometry> {
    let doc: Value = serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Parse("expected a FeatureCollection".into()));
    }
    let features = doc.get("features").and_then(Value::as_array).ok_or_else(|| Error::Parse("missing features array".into()))?;

    let mut crs_hint = doc.get("crs").and_then(|c| c.pointer("/properties/name").or(Some(c))).and_then(Value::as_str).map(str::to_owned);
    let mut exterior = None;
    let mut places = Vec::new();

    for (i, feature) in features.iter().enumerate() {
        let geometry = feature.get("geometry").ok_or_else(|| Error::Parse(format!("feature {i} has no geometry")))?;
        let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or_default();
        let props = feature.get("properties");
        let kind = props.and_then(|p| p.get("kind")).and_then(Value::as_str);
        if crs_hint.is_none() {
            crs_hint = props.and_then(|p| p.get("crs_hint")).and_then(Value::as_str).map(str::to_owned);
        }
        let coords = geometry.get("coordinates").ok_or_else(|| Error::Parse(format!("feature {i} has no coordinates")))?;
        match (gtype, kind) {
            ("Polygon", Some("place") | None) => places.push(outer_ring(coords, i)?),
            ("Polygon", Some("exterior")) => set_exterior(&mut exterior, outer_ring(coords, i)?)?,
            ("LineString", Some("exterior") | None) => {
                let line = point_list(coords, i)?;
                if line.len() < 4 || line[0] != line[line.len() - 1] {
                    return Err(Error::Parse("exterior linestring is not closed".into()));
                }
                set_exterior(&mut exterior, line)?;
            }
            (t, k) => return Err(Error::Parse(format!("feature {i}: unsupported geometry {t} with kind {k:?}"))),
        }
    }

    let exterior = exterior.ok_or_else(|| Error::Parse("no exterior boundary".into()))?;
    SlumGeometry { exterior, places, crs_hint }.validated()
}

fn set_exterior(slot: &mut Option<Vec<Point>>, ring: Vec<Point>) -> Result<()> {
    if slot.replace(ring).is_some() {
        return Err(Error::Parse("more than one exterior boundary".into()));
    }
    Ok(())
}

fn outer_ring(coords: &Value, feature: usize) -> Result<Vec<Point>> {
    let rings = coords.as_array().ok_or_else(|| Error::Parse(format!("feature {feature}: bad polygon")))?;
    let outer = rings.first().ok_or_else(|| Error::Parse(format!("feature {feature}: empty polygon")))?;
    point_list(outer, feature)
}

fn point_list(coords: &Value, feature: usize) -> Result<Vec<Point>> {
    let bad = || Error::Parse(format!("feature {feature}: malformed coordinates"));
    coords
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|c| {
            let xy = c.as_array().ok_or_else(bad)?;
            match (xy.first().and_then(Value::as_f64), xy.get(1).and_then(Value::as_f64)) {
                (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok(Point::new(x, y)),
                _ => Err(bad()),
            }
        })
        .collect()
}

fn closed(ring: &[Point]) -> Vec<[f64; 2]> {
    ring.iter().chain(ring.first()).map(|&p| p.into()).collect()
}

/// Serializes slum geometry as the GeoJSON accepted by [`parse_slum`].
pub fn to_geojson(geometry: &SlumGeometry) -> Value {
    let mut features = vec![json!({
        "type": "Feature",
        "properties": { "kind": "exterior" },
        "geometry": { "type": "LineString", "coordinates": closed(&geometry.exterior) },
    })];
    features.extend(geometry.places.iter().enumerate().map(|(i, ring)| {
        json!({
            "type": "Feature",
            "properties": { "kind": "place", "id": i },
            "geometry": { "type": "Polygon", "coordinates": [closed(ring)] },
        })
    }));
    let mut doc = json!({ "type": "FeatureCollection", "features": features });
    if let Some(crs) = &geometry.crs_hint {
        doc["crs"] = json!({ "type": "name", "properties": { "name": crs } });
    }
    doc
}
