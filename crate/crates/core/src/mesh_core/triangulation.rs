use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::spatial::BucketGrid;

/// Conforming triangulation with edge and node adjacency.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Triangulation {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    /// Unique edges `[a, b]` with `a < b`.
    pub edges: Vec<[usize; 2]>,
    /// Triangles adjacent to each edge (one or two).
    pub edge_triangles: Vec<Vec<usize>>,
    pub node_triangles: Vec<Vec<usize>>,
    pub node_edges: Vec<Vec<usize>>,
    pub boundary: Vec<bool>,
    pub areas: Vec<f64>,
    /// Constant gradients of the three barycentric functions on each triangle.
    pub grads: Vec<[Vec2; 3]>,
}

impl Triangulation {
    pub fn new(nodes: Vec<Vec2>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut triangles = triangles;
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::DegenerateCell(t, 0.0));
            }
            let [a, b, c] = tri.map(|v| nodes[v]);
            let mut area = 0.5 * geom::cross(geom::sub(b, a), geom::sub(c, a));
            if area < 0.0 {
                tri.swap(1, 2);
                area = -area;
            }
            let [a, b, c] = tri.map(|v| nodes[v]);
            let scale = geom::dist(a, b).max(geom::dist(b, c)).max(geom::dist(a, c));
            if !(area > 1e-14 * scale * scale) {
                return Err(Error::DegenerateCell(t, area));
            }
            let p = [a, b, c];
            let mut g = [[0.0; 2]; 3];
            for k in 0..3 {
                let e = geom::sub(p[(k + 2) % 3], p[(k + 1) % 3]);
                // gradient of λ_k is the inward normal of the opposite edge over its height
                g[k] = [-e[1] / (2.0 * area), e[0] / (2.0 * area)];
            }
            areas.push(area);
            grads.push(g);
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let key = (tri[k], tri[(k + 1) % 3]);
                if let Some(&o) = directed.get(&key) {
                    return Err(Error::NonConforming(o, t));
                }
                directed.insert(key, t);
            }
        }
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = vec![];
        let mut edge_triangles: Vec<Vec<usize>> = vec![];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_id.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_triangles.push(vec![]);
                    edges.len() - 1
                });
                edge_triangles[e].push(t);
            }
        }
        let n = nodes.len();
        let mut node_triangles = vec![vec![]; n];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                node_triangles[v].push(t);
            }
        }
        let mut node_edges = vec![vec![]; n];
        let mut boundary = vec![false; n];
        for (e, &[a, b]) in edges.iter().enumerate() {
            node_edges[a].push(e);
            node_edges[b].push(e);
            if edge_triangles[e].len() == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        let tri = Triangulation {
            nodes,
            triangles,
            edges,
            edge_triangles,
            node_triangles,
            node_edges,
            boundary,
            areas,
            grads,
        };
        tri.check_hanging()?;
        Ok(tri)
    }

    fn check_hanging(&self) -> Result<()> {
        let h = self.max_edge();
        let flat: Vec<f64> = self.nodes.iter().flat_map(|p| [p[0], p[1]]).collect();
        let grid = BucketGrid::from_points(&flat, 2, h);
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.edge_triangles[e].len() != 1 {
                continue;
            }
            let pa = self.nodes[a];
            let pb = self.nodes[b];
            let l = geom::dist(pa, pb);
            let mid = geom::scale(geom::add(pa, pb), 0.5);
            let mut bad = None;
            grid.for_each_candidate(&mid, l, |v| {
                if v == a || v == b || bad.is_some() {
                    return;
                }
                let p = self.nodes[v];
                if geom::segment_distance(p, pa, pb) < 1e-10 * l
                    && geom::dist(p, pa) > 1e-10 * l
                    && geom::dist(p, pb) > 1e-10 * l
                {
                    bad = Some(v);
                }
            });
            if let Some(v) = bad {
                let t = self.edge_triangles[e][0];
                let other = self.node_triangles[v].first().copied().unwrap_or(t);
                return Err(Error::NonConforming(t, other));
            }
        }
        Ok(())
    }

    pub fn max_edge(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| geom::dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Local index of node `v` in triangle `t`.
    pub fn local(&self, t: usize, v: usize) -> Option<usize> {
        self.triangles[t].iter().position(|&w| w == v)
    }

    /// Barycentric coordinates of `x` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: Vec2) -> [f64; 3] {
        let tri = self.triangles[t];
        let g = &self.grads[t];
        let mut l = [0.0; 3];
        for k in 0..3 {
            // λ_k vanishes on the opposite edge, which contains vertex k+1
            l[k] = geom::dot(g[k], geom::sub(x, self.nodes[tri[(k + 1) % 3]]));
        }
        l
    }

    /// Structured triangulation of a rectangle, `nx × ny` squares split along the diagonal.
    pub fn rectangle(lo: Vec2, hi: Vec2, nx: usize, ny: usize) -> Result<Self> {
        let mut nodes = vec![];
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([
                    lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = vec![];
        for j in 0..ny {
            for i in 0..nx {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(nodes, tris)
    }

    /// Disc of radius `r` built from `rings` concentric rings with 6k nodes on ring k.
    pub fn disc(center: Vec2, r: f64, rings: usize) -> Result<Self> {
        if rings == 0 {
            return Err(Error::InvalidParameter("disc needs at least one ring".into()));
        }
        let mut nodes = vec![center];
        let mut start = vec![0usize];
        for k in 1..=rings {
            start.push(nodes.len());
            let rad = r * k as f64 / rings as f64;
            let n = 6 * k;
            for l in 0..n {
                let t = 2.0 * std::f64::consts::PI * l as f64 / n as f64;
                nodes.push([center[0] + rad * t.cos(), center[1] + rad * t.sin()]);
            }
        }
        let mut tris = vec![];
        for l in 0..6 {
            tris.push([0, 1 + l, 1 + (l + 1) % 6]);
        }
        for k in 1..rings {
            let (ni, no) = (6 * k, 6 * (k + 1));
            let (si, so) = (start[k], start[k + 1]);
            let (mut i, mut j) = (0usize, 0usize);
            while i < ni || j < no {
                let ai = (i + 1) as f64 / ni as f64;
                let ao = (j + 1) as f64 / no as f64;
                let vi = si + i % ni;
                let vo = so + j % no;
                if j < no && (i >= ni || ao <= ai) {
                    tris.push([vi, vo, so + (j + 1) % no]);
                    j += 1;
                } else {
                    tris.push([vi, vo, si + (i + 1) % ni]);
                    i += 1;
                }
            }
        }
        Self::new(nodes, tris)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_area_and_euler() {
        let t = Triangulation::disc([0.0, 0.0], 1.0, 6).unwrap();
        let area: f64 = t.areas.iter().sum();
        // inscribed polygon with 36 sides
        let n = 36.0;
        let exact = 0.5 * n * (2.0 * std::f64::consts::PI / n).sin();
        assert!((area - exact).abs() < 1e-12);
        let v = t.nodes.len() as i64;
        let e = t.edges.len() as i64;
        let f = t.triangles.len() as i64;
        assert_eq!(v - e + f, 1);
        assert_eq!(t.boundary.iter().filter(|&&b| b).count(), 36);
    }

    #[test]
    fn barycentric_partition() {
        let t = Triangulation::rectangle([0.0, 0.0], [1.0, 1.0], 3, 3).unwrap();
        for k in 0..t.triangles.len() {
            let l = t.barycentric(k, [0.4, 0.35]);
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let g: Vec2 = t.grads[k].iter().fold([0.0, 0.0], |s, g| geom::add(s, *g));
            assert!(geom::norm(g) < 1e-12);
        }
    }

    #[test]
    fn hanging_node_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [1.0, 0.5]];
        // triangle (0,1,2) with its hypotenuse split by node 4 on the other side
        let tris = vec![[0, 1, 2], [4, 1, 5], [4, 5, 3], [4, 3, 2]];
        assert!(matches!(Triangulation::new(nodes, tris), Err(Error::NonConforming(_, _))));
    }
}
