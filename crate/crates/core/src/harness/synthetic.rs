use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point, SlumGeometry};

/// A `rows x cols` grid of quadrilateral places with unit cells. Every
/// vertex is displaced by up to `jitter` cells on each axis; the exterior
/// follows the (jittered) perimeter.
pub fn generate_synthetic(rows: usize, cols: usize, jitter: f64, seed: u64) -> Result<SlumGeometry> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("grid needs at least one row and one column".into()));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::Config(format!("jitter {jitter} outside [0, 0.5)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertex = vec![Point::new(0.0, 0.0); (rows + 1) * (cols + 1)];
    for r in 0..=rows {
        for c in 0..=cols {
            let (dx, dy) = if jitter > 0.0 { (rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter)) } else { (0.0, 0.0) };
            vertex[r * (cols + 1) + c] = Point::new(c as f64 + dx, r as f64 + dy);
        }
    }
    let p = |r: usize, c: usize| vertex[r * (cols + 1) + c];

    let mut places = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            places.push(vec![p(r, c), p(r, c + 1), p(r + 1, c + 1), p(r + 1, c)]);
        }
    }
    let mut exterior = Vec::with_capacity(2 * (rows + cols));
    exterior.extend((0..cols).map(|c| p(0, c)));
    exterior.extend((0..rows).map(|r| p(r, cols)));
    exterior.extend((1..=cols).rev().map(|c| p(rows, c)));
    exterior.extend((1..=rows).rev().map(|r| p(r, 0)));

    SlumGeometry { exterior, places, crs_hint: Some(format!("synthetic:{rows}x{cols}:{jitter}:{seed}")) }.validated()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_planar_graph;

    #[test]
    fn grid_place_counts() {
        assert_eq!(generate_synthetic(3, 3, 0.2, 7).unwrap().places.len(), 9);
        let single = build_planar_graph(&generate_synthetic(1, 1, 0.0, 0).unwrap()).unwrap();
        assert_eq!(single.faces.len(), 1);
        assert_eq!(single.candidate_count(), 0);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_synthetic(4, 3, 0.3, 11).unwrap(), generate_synthetic(4, 3, 0.3, 11).unwrap());
        assert_ne!(generate_synthetic(4, 3, 0.3, 11).unwrap(), generate_synthetic(4, 3, 0.3, 12).unwrap());
    }

    #[test]
    fn jittered_grids_build_valid_graphs() {
        for seed in 0..20 {
            let g = build_planar_graph(&generate_synthetic(4, 5, 0.45, seed).unwrap()).unwrap();
            g.check_invariants().unwrap();
            assert_eq!(g.euler_characteristic(), 2);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_synthetic(0, 3, 0.0, 0).is_err());
        assert!(generate_synthetic(2, 2, 0.5, 0).is_err());
    }
}
