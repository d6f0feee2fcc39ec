use std::fmt::Write;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::env::Stage;
use crate::error::{Error, Result};
use crate::geometry::{EdgeId, Point};
use crate::state::{Slum, SlumGraph};

pub const EXTERIOR_COLOR: &str = "#000000";
pub const STAGE_I_COLOR: &str = "#1f5fd6";
pub const STAGE_II_COLOR: &str = "#f28c28";
pub const DISCONNECTED_COLOR: &str = "#d62728";
const PLACE_COLOR: &str = "#eeeeee";
const CANDIDATE_COLOR: &str = "#b0b0b0";

/// Stage in which each planned edge was built, found by replaying the plan.
pub fn plan_stages(slum: &Arc<Slum>, edges: &[EdgeId]) -> Result<(Vec<Stage>, SlumGraph)> {
    let mut state = SlumGraph::new(Arc::clone(slum));
    let mut stages = Vec::with_capacity(edges.len());
    for &e in edges {
        stages.push(if state.all_connected() { Stage::StageII } else { Stage::StageI });
        state.set_road(e)?;
    }
    Ok((stages, state))
}

fn points_attr(path: &[Point], scale: f64, min: Point, height: f64) -> String {
    let mut s = String::new();
    for p in path {
        let _ = write!(s, "{:.3},{:.3} ", (p.x - min.x) * scale, height - (p.y - min.y) * scale);
    }
    s.pop();
    s
}

/// SVG of a plan: places in grey (red if still disconnected after the
/// plan), the exterior road in black, unused candidates thin grey,
/// Stage-I roads blue and Stage-II roads orange.
pub fn render_svg(slum: &Arc<Slum>, edges: &[EdgeId]) -> Result<String> {
    let (stages, state) = plan_stages(slum, edges)?;
    let g = &slum.graph;
    let all = g.edges.iter().flat_map(|e| e.path.iter()).chain(&g.nodes);
    let (mut min, mut max) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in all {
        min = Point::new(min.x.min(p.x), min.y.min(p.y));
        max = Point::new(max.x.max(p.x), max.y.max(p.y));
    }
    let span = (max.x - min.x).max(max.y - min.y).max(f64::MIN_POSITIVE);
    let scale = 800.0 / span;
    let pad = 10.0;
    let (w, h) = ((max.x - min.x) * scale, (max.y - min.y) * scale);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{:.3} {:.3} {:.3} {:.3}">"#,
        w + 2.0 * pad,
        h + 2.0 * pad,
        -pad,
        -pad,
        w + 2.0 * pad,
        h + 2.0 * pad
    );
    let _ = writeln!(svg, r#"<g id="places" stroke="none">"#);
    for (f, face) in g.faces.iter().enumerate() {
        let mut ring: Vec<Point> = Vec::new();
        for (k, &e) in face.edges.iter().enumerate() {
            let edge = &g.edges[e];
            let mut path = edge.path.clone();
            if edge.ends.0 != face.nodes[k] {
                path.reverse();
            }
            ring.extend(path.iter().skip(usize::from(k > 0)));
        }
        let fill = if state.is_connected(f) { PLACE_COLOR } else { DISCONNECTED_COLOR };
        let _ = writeln!(svg, r#"<polygon class="place" data-face="{f}" fill="{fill}" points="{}"/>"#, points_attr(&ring, scale, min, h));
    }
    let _ = writeln!(svg, "</g>");

    let planned: Vec<Option<Stage>> = {
        let mut v = vec![None; g.edges.len()];
        for (&e, &s) in edges.iter().zip(&stages) {
            v[e] = Some(s);
        }
        v
    };
    let _ = writeln!(svg, r#"<g id="edges" fill="none" stroke-linecap="round">"#);
    for (id, e) in g.edges.iter().enumerate() {
        let (class, color, width) = match (e.exterior || e.road, planned[id]) {
            (_, Some(Stage::StageI)) => ("stage-i", STAGE_I_COLOR, 3.0),
            (_, Some(Stage::StageII)) => ("stage-ii", STAGE_II_COLOR, 3.0),
            (true, None) => ("exterior", EXTERIOR_COLOR, 3.0),
            (false, None) => ("candidate", CANDIDATE_COLOR, 1.0),
        };
        let _ = writeln!(
            svg,
            r#"<polyline class="{class}" data-edge="{id}" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
            points_attr(&e.path, scale, min, h)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// GeoJSON `FeatureCollection` with one `LineString` per planned edge,
/// carrying its edge id, step, stage and cost.
pub fn export_plan_geojson(slum: &Arc<Slum>, edges: &[EdgeId]) -> Result<Value> {
    let (stages, _) = plan_stages(slum, edges)?;
    let features: Vec<Value> = edges
        .iter()
        .zip(&stages)
        .enumerate()
        .map(|(i, (&e, stage))| {
            let edge = &slum.graph.edges[e];
            let coords: Vec<[f64; 2]> = edge.path.iter().map(|&p| p.into()).collect();
            json!({
                "type": "Feature",
                "properties": { "kind": "plan_road", "edge": e, "step": i + 1, "stage": stage, "cost": edge.cost },
                "geometry": { "type": "LineString", "coordinates": coords },
            })
        })
        .collect();
    Ok(json!({ "type": "FeatureCollection", "properties": { "slum": slum.id }, "features": features }))
}

/// Edge ids of an exported plan, in step order.
pub fn import_plan_geojson(document: &str) -> Result<Vec<EdgeId>> {
    let doc: Value = serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    let features = doc.get("features").and_then(Value::as_array).ok_or_else(|| Error::Parse("missing features array".into()))?;
    let mut steps: Vec<(u64, EdgeId)> = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let get = |k: &str| props.and_then(|p| p.get(k)).and_then(Value::as_u64);
        match (get("step"), get("edge")) {
            (Some(step), Some(edge)) => steps.push((step, edge as EdgeId)),
            _ => return Err(Error::Parse(format!("feature {i} lacks step or edge"))),
        }
    }
    steps.sort_by_key(|s| s.0);
    Ok(steps.into_iter().map(|s| s.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic_slum;

    #[test]
    fn empty_plan_has_no_plan_strokes() {
        let slum = synthetic_slum(2, 2, 0.0, 0).unwrap();
        let svg = render_svg(&slum, &[]).unwrap();
        assert!(!svg.contains(STAGE_I_COLOR) && !svg.contains(STAGE_II_COLOR));
        assert!(svg.contains(EXTERIOR_COLOR));
    }

    #[test]
    fn geojson_round_trip() {
        let slum = synthetic_slum(3, 3, 0.1, 2).unwrap();
        let plan = vec![slum.candidates[3], slum.candidates[0], slum.candidates[7]];
        let doc = export_plan_geojson(&slum, &plan).unwrap();
        assert_eq!(import_plan_geojson(&doc.to_string()).unwrap(), plan);
    }
}
