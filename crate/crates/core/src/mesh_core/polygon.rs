use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::domain::Domain;
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::spatial::BucketGrid;

/// Interface shared by two cells. `normal` is N_{c0,c1}: unit, pointing from
/// `cells[1]` into `cells[0]` (the outward normal of `cells[1]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub cells: [usize; 2],
    pub segments: Vec<[usize; 2]>,
    pub normal: Vec2,
    pub area: f64,
}

/// Lattice bookkeeping attached by the generators: every cell is a translate
/// `[m](p)` of a pattern polygon, which lets halos be added as exact translates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeTags {
    pub lattice: [Vec2; 2],
    /// Pattern polygons at m = 0.
    pub pattern: Vec<Vec<Vec2>>,
    /// σ(i) = (m, p) for every cell.
    pub sigma: Vec<([i64; 2], usize)>,
}

impl LatticeTags {
    pub fn translate(&self, m: [i64; 2]) -> Vec2 {
        let l = &self.lattice;
        [
            m[0] as f64 * l[0][0] + m[1] as f64 * l[1][0],
            m[0] as f64 * l[0][1] + m[1] as f64 * l[1][1],
        ]
    }
}

/// Conforming mesh of convex polygons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonMesh {
    pub vertices: Vec<Vec2>,
    pub cells: Vec<Vec<usize>>,
    pub faces: Vec<Face>,
    pub volumes: Vec<f64>,
    pub barycenters: Vec<Vec2>,
    pub diameters: Vec<f64>,
    pub delta_x: f64,
    pub domain: Domain,
    pub cell_faces: Vec<Vec<usize>>,
    pub tags: Option<LatticeTags>,
}

impl PolygonMesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn polygon(&self, i: usize) -> Vec<Vec2> {
        self.cells[i].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Neighbour of `i` across face `f`.
    pub fn other(&self, f: usize, i: usize) -> usize {
        let c = self.faces[f].cells;
        if c[0] == i {
            c[1]
        } else {
            c[0]
        }
    }

    /// N_{j,i}: unit normal on the face between `i` and `j`, pointing from `i` into `j`.
    pub fn normal_into(&self, f: usize, j: usize) -> Vec2 {
        let face = &self.faces[f];
        if face.cells[0] == j {
            face.normal
        } else {
            geom::scale(face.normal, -1.0)
        }
    }

    /// Boundary edges of cell `i` with outward unit normals, as vertex pairs.
    pub fn cell_edges(&self, i: usize) -> impl Iterator<Item = (Vec2, Vec2, Vec2)> + '_ {
        let c = &self.cells[i];
        let n = c.len();
        (0..n).filter_map(move |k| {
            let a = self.vertices[c[k]];
            let b = self.vertices[c[(k + 1) % n]];
            let e = geom::sub(b, a);
            let l = geom::norm(e);
            if l == 0.0 {
                None
            } else {
                Some((a, b, [e[1] / l, -e[0] / l]))
            }
        })
    }
}

/// Merges vertices closer than `tol` so that translated cells share indices.
pub(crate) struct VertexPool {
    pub vertices: Vec<Vec2>,
    grid: HashMap<(i64, i64), Vec<usize>>,
    tol: f64,
}

impl VertexPool {
    pub fn new(tol: f64) -> Self {
        VertexPool { vertices: vec![], grid: HashMap::new(), tol }
    }

    pub fn with_vertices(vertices: Vec<Vec2>, tol: f64) -> Self {
        let mut p = Self::new(tol);
        for v in vertices {
            let k = p.key(v);
            p.grid.entry(k).or_default().push(p.vertices.len());
            p.vertices.push(v);
        }
        p
    }

    fn key(&self, v: Vec2) -> (i64, i64) {
        ((v[0] / (4.0 * self.tol)).floor() as i64, (v[1] / (4.0 * self.tol)).floor() as i64)
    }

    pub fn insert(&mut self, v: Vec2) -> usize {
        let (a, b) = self.key(v);
        for da in -1..=1 {
            for db in -1..=1 {
                if let Some(ids) = self.grid.get(&(a + da, b + db)) {
                    for &i in ids {
                        if geom::dist(self.vertices[i], v) <= self.tol {
                            return i;
                        }
                    }
                }
            }
        }
        let id = self.vertices.len();
        self.vertices.push(v);
        self.grid.entry((a, b)).or_default().push(id);
        id
    }
}

/// Build a conforming polygon mesh. Clockwise cells are reoriented.
pub fn build_polygon_mesh(
    vertices: Vec<Vec2>,
    cells: Vec<Vec<usize>>,
    domain: Domain,
) -> Result<PolygonMesh> {
    let mut cells = cells;
    let nv = vertices.len();
    let mut volumes = Vec::with_capacity(cells.len());
    let mut barycenters = Vec::with_capacity(cells.len());
    let mut diameters = Vec::with_capacity(cells.len());
    for (i, c) in cells.iter_mut().enumerate() {
        if c.len() < 3 || c.iter().any(|&v| v >= nv) {
            return Err(Error::DegenerateCell(i, 0.0));
        }
        let mut poly: Vec<Vec2> = c.iter().map(|&v| vertices[v]).collect();
        let mut area = geom::polygon_area(&poly);
        if area < 0.0 {
            c.reverse();
            poly.reverse();
            area = -area;
        }
        let diam = geom::polygon_diameter(&poly);
        if !(area > 1e-14 * diam * diam) {
            return Err(Error::DegenerateCell(i, area));
        }
        if !geom::is_convex_ccw(&poly, 1e-10) {
            return Err(Error::NotConvex(i));
        }
        volumes.push(area);
        barycenters.push(geom::polygon_centroid(&poly));
        diameters.push(diam);
    }
    let delta_x = diameters.iter().cloned().fold(0.0, f64::max);

    // directed edge (a, b) of cell c
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, c) in cells.iter().enumerate() {
        let n = c.len();
        for k in 0..n {
            let (a, b) = (c[k], c[(k + 1) % n]);
            if a == b {
                continue;
            }
            if let Some(&o) = edge_owner.get(&(a, b)) {
                return Err(Error::NonConforming(o, i));
            }
            edge_owner.insert((a, b), i);
        }
    }
    let mut pair_faces: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces: Vec<Face> = vec![];
    let mut unshared: Vec<(usize, usize, usize)> = vec![];
    let mut keys: Vec<_> = edge_owner.keys().cloned().collect();
    keys.sort();
    for (a, b) in keys {
        let i = edge_owner[&(a, b)];
        match edge_owner.get(&(b, a)) {
            Some(&j) => {
                if a > b {
                    continue;
                }
                if i == j {
                    return Err(Error::NonConforming(i, j));
                }
                // cell i traverses a->b counter-clockwise: its outward normal is
                // N_{j,i}; store faces with cells [lo, hi]
                let e = geom::sub(vertices[b], vertices[a]);
                let l = geom::norm(e);
                let out_i = [e[1] / l, -e[0] / l];
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                // N_{lo,hi} = outward normal of hi
                let n_lo_hi = if hi == i { out_i } else { geom::scale(out_i, -1.0) };
                let seg = if hi == i { [a, b] } else { [b, a] };
                match pair_faces.get(&(lo, hi)) {
                    Some(&f) => {
                        let face = &mut faces[f];
                        if geom::dot(face.normal, n_lo_hi) < 1.0 - 1e-10 {
                            return Err(Error::NonConforming(lo, hi));
                        }
                        face.segments.push(seg);
                        face.area += l;
                    }
                    None => {
                        pair_faces.insert((lo, hi), faces.len());
                        faces.push(Face { cells: [lo, hi], segments: vec![seg], normal: n_lo_hi, area: l });
                    }
                }
            }
            None => unshared.push((a, b, i)),
        }
    }
    check_partial_overlaps(&vertices, &unshared, delta_x)?;

    let mut cell_faces = vec![vec![]; cells.len()];
    for (f, face) in faces.iter().enumerate() {
        cell_faces[face.cells[0]].push(f);
        cell_faces[face.cells[1]].push(f);
    }
    Ok(PolygonMesh {
        vertices,
        cells,
        faces,
        volumes,
        barycenters,
        diameters,
        delta_x,
        domain,
        cell_faces,
        tags: None,
    })
}

/// Unshared edges that overlap collinearly with positive length betray hanging
/// nodes or misaligned cells.
fn check_partial_overlaps(vertices: &[Vec2], edges: &[(usize, usize, usize)], h: f64) -> Result<()> {
    if edges.is_empty() {
        return Ok(());
    }
    let mids: Vec<f64> = edges
        .iter()
        .flat_map(|&(a, b, _)| {
            let m = geom::scale(geom::add(vertices[a], vertices[b]), 0.5);
            [m[0], m[1]]
        })
        .collect();
    let grid = BucketGrid::from_points(&mids, 2, h.max(1e-300));
    let tol = 1e-9 * h;
    for (k, &(a, b, i)) in edges.iter().enumerate() {
        let pa = vertices[a];
        let pb = vertices[b];
        let e = geom::sub(pb, pa);
        let l = geom::norm(e);
        let u = geom::scale(e, 1.0 / l);
        let mut err = None;
        grid.for_each_candidate(&mids[2 * k..2 * k + 2], h, |m| {
            if m <= k || err.is_some() {
                return;
            }
            let (c, d, j) = edges[m];
            if i == j {
                return;
            }
            let pc = vertices[c];
            let pd = vertices[d];
            if geom::cross(u, geom::sub(pc, pa)).abs() > tol || geom::cross(u, geom::sub(pd, pa)).abs() > tol {
                return;
            }
            let s0 = geom::dot(u, geom::sub(pc, pa));
            let s1 = geom::dot(u, geom::sub(pd, pa));
            let overlap = s0.max(s1).min(l) - s0.min(s1).max(0.0);
            if overlap > tol {
                err = Some(Error::NonConforming(i.min(j), i.max(j)));
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> (Vec<Vec2>, Vec<Vec<usize>>) {
        let mut v = vec![];
        for j in 0..3 {
            for i in 0..3 {
                v.push([i as f64 * 0.5, j as f64 * 0.5]);
            }
        }
        let id = |i: usize, j: usize| j * 3 + i;
        let mut cells = vec![];
        for j in 0..2 {
            for i in 0..2 {
                cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        (v, cells)
    }

    #[test]
    fn two_by_two_grid() {
        let (v, c) = grid2();
        let m = build_polygon_mesh(v, c, Domain::unit_square()).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.faces.len(), 4);
        for &a in &m.volumes {
            assert!((a - 0.25).abs() < 1e-15);
        }
        assert!((m.delta_x - 2f64.sqrt() / 2.0).abs() < 1e-15);
        for f in &m.faces {
            // normal points from cells[1] into cells[0]
            let d = geom::sub(m.barycenters[f.cells[0]], m.barycenters[f.cells[1]]);
            assert!(geom::dot(d, f.normal) > 0.0);
        }
    }

    #[test]
    fn triangle_pair_antisymmetric() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let m = build_polygon_mesh(v, vec![vec![0, 1, 2], vec![0, 2, 3]], Domain::unit_square()).unwrap();
        assert_eq!(m.faces.len(), 1);
        let n01 = m.normal_into(0, 0);
        let n10 = m.normal_into(0, 1);
        assert_eq!(n01, geom::scale(n10, -1.0));
    }

    #[test]
    fn hanging_node_rejected() {
        // one big square on the left, two half squares on the right
        let v = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [1.0, 0.5],
            [2.0, 0.0],
            [2.0, 0.5],
            [2.0, 1.0],
        ];
        let cells = vec![vec![0, 1, 2, 3], vec![1, 5, 6, 4], vec![4, 6, 7, 2]];
        let err = build_polygon_mesh(v, cells, Domain::rect([0.0, 0.0], [2.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NonConforming(0, _)));
    }

    #[test]
    fn zero_area_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let err = build_polygon_mesh(v, vec![vec![0, 1, 2]], Domain::unit_square()).unwrap_err();
        assert!(matches!(err, Error::DegenerateCell(0, _)));
    }
}
