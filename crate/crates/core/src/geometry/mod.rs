//! Slum geometry: ingestion, planar graph construction, simplification and
//! normalization.

mod geojson;
mod planar;
mod simplify;

pub use self::geojson::{parse_slum, to_geojson};
pub use self::planar::{build_planar_graph, normalize, Edge, EdgeId, Face, FaceId, GraphDocument, NodeId, PlanarGraph};
pub use self::simplify::{default_merge_eps, simplify, SimplifyMap};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A 2-D point. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Raw slum geometry: the existing-road boundary and the places it encloses.
///
/// Rings are stored open (the closing vertex is not repeated).
#[derive(Clone, Debug, PartialEq)]
pub struct SlumGeometry {
    pub exterior: Vec<Point>,
    pub places: Vec<Vec<Point>>,
    pub crs_hint: Option<String>,
}

impl SlumGeometry {
    /// Checks every invariant and returns the validated geometry.
    pub fn validated(mut self) -> Result<Self> {
        let tol = snap_tolerance(self.all_points());
        self.exterior = clean_ring(&self.exterior, tol);
        if self.exterior.len() < 3 {
            return Err(Error::Parse("exterior needs at least 3 distinct vertices".into()));
        }
        if self.places.is_empty() {
            return Err(Error::Parse("no place polygons".into()));
        }
        for (i, place) in self.places.iter_mut().enumerate() {
            *place = clean_ring(place, tol);
            if place.len() < 3 {
                return Err(Error::Parse(format!("place {i} is degenerate (< 3 vertices)")));
            }
        }
        if ring_self_intersects(&self.exterior, tol) {
            return Err(Error::Geometry("exterior boundary self-intersects".into()));
        }
        for (i, place) in self.places.iter().enumerate() {
            if ring_self_intersects(place, tol) {
                return Err(Error::Geometry(format!("place {i} self-intersects")));
            }
            if let Some(p) = place.iter().find(|p| !point_in_ring(**p, &self.exterior, tol)) {
                return Err(Error::Geometry(format!("place {i} has vertex ({}, {}) outside the exterior", p.x, p.y)));
            }
        }
        self.check_disjoint(tol)?;
        Ok(self)
    }

    fn all_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.exterior.iter().chain(self.places.iter().flatten()).copied()
    }

    fn check_disjoint(&self, tol: f64) -> Result<()> {
        let boxes: Vec<_> = self.places.iter().map(|p| bbox(p.iter().copied())).collect();
        for i in 0..self.places.len() {
            for j in (i + 1)..self.places.len() {
                let (a, b) = (&boxes[i], &boxes[j]);
                if a.0.x > b.1.x + tol || b.0.x > a.1.x + tol || a.0.y > b.1.y + tol || b.0.y > a.1.y + tol {
                    continue;
                }
                let (pi, pj) = (&self.places[i], &self.places[j]);
                let crossing = ring_segments(pi).any(|(p, q)| ring_segments(pj).any(|(r, s)| segments_cross_properly(p, q, r, s, tol)));
                let nested = pi.iter().any(|p| point_strictly_inside(*p, pj, tol)) || pj.iter().any(|p| point_strictly_inside(*p, pi, tol));
                if crossing || nested {
                    return Err(Error::Geometry(format!("places {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// log10 of the number of ways to choose `k` of `n` candidate segments.
pub fn solution_space_log10(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("budget {k} exceeds {n} candidates")));
    }
    let (n, k) = (n as f64, k as f64);
    let ln = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0);
    Ok((ln / std::f64::consts::LN_10).max(0.0))
}

/// Snapping tolerance: 1e-7 of the bounding-box diagonal.
pub(crate) fn snap_tolerance(points: impl Iterator<Item = Point>) -> f64 {
    let (lo, hi) = bbox(points);
    let diag = lo.dist(hi);
    if diag > 0.0 {
        1e-7 * diag
    } else {
        1e-12
    }
}

pub(crate) fn bbox(points: impl Iterator<Item = Point>) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Drops the repeated closing vertex and consecutive near-duplicates.
fn clean_ring(ring: &[Point], tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(ring.len());
    for &p in ring {
        if out.last().is_none_or(|q| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(out[out.len() - 1]) <= tol {
        out.pop();
    }
    out
}

fn ring_segments(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Sign of the orientation of `c` relative to segment `a -> b`, with
/// distances below `tol` treated as collinear.
fn orientation(a: Point, b: Point, c: Point, tol: f64) -> i8 {
    let len = a.dist(b).max(tol);
    let d = cross(a, b, c) / len;
    if d > tol {
        1
    } else if d < -tol {
        -1
    } else {
        0
    }
}

fn on_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    orientation(a, b, p, tol) == 0 && p.x >= a.x.min(b.x) - tol && p.x <= a.x.max(b.x) + tol && p.y >= a.y.min(b.y) - tol && p.y <= a.y.max(b.y) + tol
}

fn segments_cross_properly(p: Point, q: Point, r: Point, s: Point, tol: f64) -> bool {
    let o1 = orientation(p, q, r, tol);
    let o2 = orientation(p, q, s, tol);
    let o3 = orientation(r, s, p, tol);
    let o4 = orientation(r, s, q, tol);
    o1 * o2 < 0 && o3 * o4 < 0
}

fn segments_touch(p: Point, q: Point, r: Point, s: Point, tol: f64) -> bool {
    segments_cross_properly(p, q, r, s, tol)
        || on_segment(r, p, q, tol)
        || on_segment(s, p, q, tol)
        || on_segment(p, r, s, tol)
        || on_segment(q, r, s, tol)
}

fn ring_self_intersects(ring: &[Point], tol: f64) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent segments share an endpoint by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_touch(a, b, c, d, tol) {
                return true;
            }
        }
    }
    false
}

fn point_on_ring(p: Point, ring: &[Point], tol: f64) -> bool {
    ring_segments(ring).any(|(a, b)| on_segment(p, a, b, tol))
}

fn winding_inside(p: Point, ring: &[Point]) -> bool {
    let mut inside = false;
    for (a, b) in ring_segments(ring) {
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Inside or on the boundary.
pub(crate) fn point_in_ring(p: Point, ring: &[Point], tol: f64) -> bool {
    point_on_ring(p, ring, tol) || winding_inside(p, ring)
}

fn point_strictly_inside(p: Point, ring: &[Point], tol: f64) -> bool {
    !point_on_ring(p, ring, tol) && winding_inside(p, ring)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> Vec<Point> {
        vec![Point::new(x, y), Point::new(x + s, y), Point::new(x + s, y + s), Point::new(x, y + s)]
    }

    #[test]
    fn unit_square_identity_case() {
        let g = SlumGeometry { exterior: square(0.0, 0.0, 1.0), places: vec![square(0.0, 0.0, 1.0)], crs_hint: None }.validated().unwrap();
        assert_eq!(g.places.len(), 1);
        assert_eq!(g.exterior.len(), 4);
    }

    #[test]
    fn rejects_degenerate_place() {
        let err = SlumGeometry {
            exterior: square(0.0, 0.0, 1.0),
            places: vec![vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 0.0)]],
            crs_hint: None,
        }
        .validated()
        .unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn rejects_bowtie() {
        let bowtie = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let err = SlumGeometry { exterior: square(0.0, 0.0, 1.0), places: vec![bowtie], crs_hint: None }.validated().unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn rejects_place_outside_exterior() {
        let err = SlumGeometry { exterior: square(0.0, 0.0, 1.0), places: vec![square(0.5, 0.5, 1.0)], crs_hint: None }.validated().unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn rejects_overlapping_places() {
        let err = SlumGeometry { exterior: square(0.0, 0.0, 4.0), places: vec![square(0.0, 0.0, 2.0), square(1.0, 1.0, 2.0)], crs_hint: None }
            .validated()
            .unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn adjacent_places_are_fine() {
        SlumGeometry {
            exterior: vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(2.0, 1.0), Point::new(0.0, 1.0)],
            places: vec![square(0.0, 0.0, 1.0), square(1.0, 0.0, 1.0)],
            crs_hint: None,
        }
        .validated()
        .unwrap();
    }

    #[test]
    fn solution_space_values() {
        assert!(solution_space_log10(80, 40).unwrap() > 23.0);
        assert_eq!(solution_space_log10(17, 0).unwrap(), 0.0);
        assert!(matches!(solution_space_log10(3, 4), Err(Error::Domain(_))));
    }
}
