//! Cell-bucket spatial index for truncated pair sums and point location.

use std::collections::HashMap;

use crate::geom::Vec2;

type Key = [i64; 3];

/// Uniform bucket grid in 1, 2 or 3 dimensions.
#[derive(Clone, Debug)]
pub struct BucketGrid {
    dim: usize,
    cell: f64,
    map: HashMap<Key, Vec<usize>>,
}

impl BucketGrid {
    fn key(&self, x: &[f64]) -> Key {
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = (x[a] / self.cell).floor() as i64;
        }
        k
    }

    /// Index points stored flat as `coords[i * dim + a]`.
    pub fn from_points(coords: &[f64], dim: usize, cell: f64) -> Self {
        assert!((1..=3).contains(&dim) && cell > 0.0);
        let mut g = BucketGrid { dim, cell, map: HashMap::new() };
        for (i, x) in coords.chunks_exact(dim).enumerate() {
            let k = g.key(x);
            g.map.entry(k).or_default().push(i);
        }
        g
    }

    /// Index axis-aligned boxes (2D); each box goes into every bucket it overlaps.
    pub fn from_boxes(boxes: &[(Vec2, Vec2)], cell: f64) -> Self {
        let mut g = BucketGrid { dim: 2, cell, map: HashMap::new() };
        for (i, (lo, hi)) in boxes.iter().enumerate() {
            let k0 = g.key(lo);
            let k1 = g.key(hi);
            for a in k0[0]..=k1[0] {
                for b in k0[1]..=k1[1] {
                    g.map.entry([a, b, 0]).or_default().push(i);
                }
            }
        }
        g
    }

    /// Entries of the bucket containing `x`.
    pub fn bucket(&self, x: &[f64]) -> &[usize] {
        self.map.get(&self.key(x)).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Visit every indexed item whose bucket lies within `radius` of `x`
    /// (a superset of the items within `radius`). Order is deterministic.
    pub fn for_each_candidate(&self, x: &[f64], radius: f64, mut f: impl FnMut(usize)) {
        let r = (radius / self.cell).ceil() as i64;
        let k = self.key(x);
        let span = |a: usize| if a < self.dim { -r..=r } else { 0..=0 };
        for da in span(0) {
            for db in span(1) {
                for dc in span(2) {
                    if let Some(v) = self.map.get(&[k[0] + da, k[1] + db, k[2] + dc]) {
                        for &j in v {
                            f(j);
                        }
                    }
                }
            }
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_all_neighbours() {
        let coords: Vec<f64> = (0..50).flat_map(|i| [i as f64 * 0.1, (i % 7) as f64 * 0.13]).collect();
        let g = BucketGrid::from_points(&coords, 2, 0.25);
        for i in 0..50 {
            let xi = &coords[2 * i..2 * i + 2];
            let mut found = vec![];
            g.for_each_candidate(xi, 0.3, |j| {
                let xj = &coords[2 * j..2 * j + 2];
                if ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt() < 0.3 {
                    found.push(j);
                }
            });
            found.sort();
            let brute: Vec<usize> = (0..50)
                .filter(|&j| {
                    let xj = &coords[2 * j..2 * j + 2];
                    ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt() < 0.3
                })
                .collect();
            assert_eq!(found, brute);
        }
    }
}
