use std::f64::consts::PI;

use super::domain::Domain;
use super::generators::add_halo;
use super::polygon::PolygonMesh;
use super::triangulation::Triangulation;
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::spatial::BucketGrid;

/// Default width of the region around Ω on which Σχ_i = 1 is guaranteed.
pub const DEFAULT_UNITY_MARGIN: f64 = 4.0;

/// How the cell and face functions are realised.
#[derive(Clone, Debug)]
pub enum CellKind {
    /// χ_i = |B_r|⁻¹ 1_{B_r} ⋆ 1_{V_i}; `radius == 0` means the sharp indicator 1_{V_i}.
    Polygon { poly: PolygonMesh, radius: f64 },
    /// P1 hat functions of a triangulation, n_{i,j} = χ_j∇χ_i − χ_i∇χ_j.
    Hat { tri: Triangulation },
}

/// Undirected edge `(i, j)` with `i < j`; `face` indexes the polygon face or triangulation edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub face: usize,
}

impl Edge {
    pub fn other(&self, k: usize) -> usize {
        if k == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// Generalized mesh: cell functions, face functions and the derived index sets.
#[derive(Clone, Debug)]
pub struct GeneralMesh {
    pub kind: CellKind,
    pub domain: Domain,
    pub volumes: Vec<f64>,
    pub barycenters: Vec<Vec2>,
    /// Bounding boxes of the supports.
    pub supports: Vec<(Vec2, Vec2)>,
    pub support_diameters: Vec<f64>,
    /// Maximal support diameter.
    pub delta_x: f64,
    pub edges: Vec<Edge>,
    pub cell_edges: Vec<Vec<usize>>,
    /// V_Ω°: supp χ_i ⊆ Ω.
    pub interior: Vec<bool>,
    /// V_Ω: supp χ_i meets Ω.
    pub in_domain: Vec<bool>,
    /// E_Ω°: supp n_{i,j} ⊆ Ω.
    pub edge_interior: Vec<bool>,
    locator: BucketGrid,
}

impl GeneralMesh {
    pub fn n_cells(&self) -> usize {
        self.volumes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn polygon(&self) -> Option<&PolygonMesh> {
        match &self.kind {
            CellKind::Polygon { poly, .. } => Some(poly),
            _ => None,
        }
    }

    pub fn triangulation(&self) -> Option<&Triangulation> {
        match &self.kind {
            CellKind::Hat { tri } => Some(tri),
            _ => None,
        }
    }

    /// Mollification radius (0 for sharp and hat meshes).
    pub fn radius(&self) -> f64 {
        match &self.kind {
            CellKind::Polygon { radius, .. } => *radius,
            _ => 0.0,
        }
    }

    pub fn is_sharp(&self) -> bool {
        matches!(self.kind, CellKind::Polygon { radius, .. } if radius == 0.0)
    }

    /// Lattice tags σ(i) when the mesh came from a periodic generator.
    pub fn sigma(&self) -> Option<&[([i64; 2], usize)]> {
        self.polygon().and_then(|p| p.tags.as_ref()).map(|t| t.sigma.as_slice())
    }

    /// Cells whose support may contain `x`.
    pub fn candidates(&self, x: Vec2) -> &[usize] {
        self.locator.bucket(&x)
    }

    fn in_box(&self, i: usize, x: Vec2) -> bool {
        let (lo, hi) = self.supports[i];
        x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1]
    }

    /// χ_i(x).
    pub fn chi(&self, i: usize, x: Vec2) -> f64 {
        if !self.in_box(i, x) {
            return 0.0;
        }
        match &self.kind {
            CellKind::Polygon { poly, radius } => {
                let p = poly.polygon(i);
                if *radius == 0.0 {
                    if geom::in_convex(&p, x) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (geom::disc_polygon_area(x, *radius, &p) / (PI * radius * radius)).clamp(0.0, 1.0)
                }
            }
            CellKind::Hat { tri } => {
                for &t in &tri.node_triangles[i] {
                    let l = tri.barycentric(t, x);
                    if l.iter().all(|&v| v >= -1e-14) {
                        let k = tri.local(t, i).unwrap();
                        return l[k].max(0.0);
                    }
                }
                0.0
            }
        }
    }

    /// ∇χ_i(x): exact for mollified polygons, piecewise constant for hats.
    /// Sharp cells have no pointwise gradient and return zero.
    pub fn grad_chi(&self, i: usize, x: Vec2) -> Vec2 {
        if !self.in_box(i, x) {
            return [0.0, 0.0];
        }
        match &self.kind {
            CellKind::Polygon { poly, radius } => {
                if *radius == 0.0 {
                    return [0.0, 0.0];
                }
                let mut g = [0.0, 0.0];
                for (a, b, nu) in poly.cell_edges(i) {
                    let l = geom::disc_segment_length(x, *radius, a, b);
                    g = geom::add(g, geom::scale(nu, -l));
                }
                geom::scale(g, 1.0 / (PI * radius * radius))
            }
            CellKind::Hat { tri } => {
                for &t in &tri.node_triangles[i] {
                    let l = tri.barycentric(t, x);
                    if l.iter().all(|&v| v >= -1e-14) {
                        return tri.grads[t][tri.local(t, i).unwrap()];
                    }
                }
                [0.0, 0.0]
            }
        }
    }

    /// n_{i,j}(x) for the stored orientation of edge `e` (i = edges[e].i).
    pub fn face_fn(&self, e: usize, x: Vec2) -> Vec2 {
        let edge = self.edges[e];
        match &self.kind {
            CellKind::Polygon { poly, radius } => {
                if *radius == 0.0 {
                    return [0.0, 0.0];
                }
                let face = &poly.faces[edge.face];
                let mut l = 0.0;
                for s in &face.segments {
                    l += geom::disc_segment_length(x, *radius, poly.vertices[s[0]], poly.vertices[s[1]]);
                }
                geom::scale(face.normal, l / (PI * radius * radius))
            }
            CellKind::Hat { tri } => {
                for &t in &tri.edge_triangles[edge.face] {
                    let l = tri.barycentric(t, x);
                    if l.iter().all(|&v| v >= -1e-14) {
                        let ki = tri.local(t, edge.i).unwrap();
                        let kj = tri.local(t, edge.j).unwrap();
                        let g = tri.grads[t];
                        return geom::sub(geom::scale(g[ki], l[kj]), geom::scale(g[kj], l[ki]));
                    }
                }
                [0.0, 0.0]
            }
        }
    }

    /// n_{k,l}(x) for an arbitrary orientation of edge `e`.
    pub fn face_fn_directed(&self, e: usize, k: usize, x: Vec2) -> Vec2 {
        let n = self.face_fn(e, x);
        if self.edges[e].i == k {
            n
        } else {
            geom::scale(n, -1.0)
        }
    }

    /// Σ_i χ_i(x).
    pub fn unity(&self, x: Vec2) -> f64 {
        self.candidates(x).iter().map(|&i| self.chi(i, x)).sum()
    }
}

fn finish(
    kind: CellKind,
    domain: Domain,
    volumes: Vec<f64>,
    barycenters: Vec<Vec2>,
    supports: Vec<(Vec2, Vec2)>,
    support_diameters: Vec<f64>,
    edges: Vec<Edge>,
    interior: Vec<bool>,
    in_domain: Vec<bool>,
    edge_interior: Vec<bool>,
) -> GeneralMesh {
    let n = volumes.len();
    let mut cell_edges = vec![vec![]; n];
    for (e, ed) in edges.iter().enumerate() {
        cell_edges[ed.i].push(e);
        cell_edges[ed.j].push(e);
    }
    let delta_x = support_diameters.iter().cloned().fold(0.0, f64::max);
    let locator = BucketGrid::from_boxes(&supports, delta_x.max(1e-300));
    GeneralMesh {
        kind,
        domain,
        volumes,
        barycenters,
        supports,
        support_diameters,
        delta_x,
        edges,
        cell_edges,
        interior,
        in_domain,
        edge_interior,
        locator,
    }
}

fn from_polygons(poly: PolygonMesh, radius: f64) -> GeneralMesh {
    let n = poly.n_cells();
    let domain = poly.domain.clone();
    let mut supports = Vec::with_capacity(n);
    let mut diam = Vec::with_capacity(n);
    let mut interior = Vec::with_capacity(n);
    let mut in_domain = Vec::with_capacity(n);
    for i in 0..n {
        let p = poly.polygon(i);
        let (lo, hi) = geom::bbox(&p);
        supports.push(([lo[0] - radius, lo[1] - radius], [hi[0] + radius, hi[1] + radius]));
        diam.push(poly.diameters[i] + 2.0 * radius);
        interior.push(domain.contains_hull_with_margin(&p, radius));
        in_domain.push(domain.meets_hull_with_margin(&p, radius));
    }
    let edges: Vec<Edge> = poly
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| Edge { i: face.cells[0], j: face.cells[1], face: f })
        .collect();
    let edge_interior = poly
        .faces
        .iter()
        .map(|face| {
            let pts: Vec<Vec2> = face.segments.iter().flat_map(|s| [poly.vertices[s[0]], poly.vertices[s[1]]]).collect();
            domain.contains_hull_with_margin(&pts, radius)
        })
        .collect();
    let volumes = poly.volumes.clone();
    let barycenters = poly.barycenters.clone();
    finish(
        CellKind::Polygon { poly, radius },
        domain,
        volumes,
        barycenters,
        supports,
        diam,
        edges,
        interior,
        in_domain,
        edge_interior,
    )
}

/// Mollified polygon cells with radius `r`; halo translates are added so that
/// Σχ_i = 1 on Ω + B(0, 4).
pub fn mollify_polygon_mesh(mesh: &PolygonMesh, r: f64) -> Result<GeneralMesh> {
    mollify_polygon_mesh_with(mesh, r, DEFAULT_UNITY_MARGIN)
}

/// As [`mollify_polygon_mesh`] with an explicit width of the unity region.
/// Meshes without lattice tags are used as given.
pub fn mollify_polygon_mesh_with(mesh: &PolygonMesh, r: f64, unity_margin: f64) -> Result<GeneralMesh> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("mollification radius must be positive, got {r}")));
    }
    if r > mesh.delta_x * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("radius {r} exceeds δx = {}", mesh.delta_x)));
    }
    if !(unity_margin >= 0.0) {
        return Err(Error::InvalidParameter("unity margin must be nonnegative".into()));
    }
    let poly = if mesh.tags.is_some() { add_halo(mesh, unity_margin + r)? } else { mesh.clone() };
    Ok(from_polygons(poly, r))
}

/// Sharp indicator cells χ_i = 1_{V_i} (the polygon scheme); halo as in mollification.
pub fn sharp_polygon_mesh(mesh: &PolygonMesh, unity_margin: f64) -> Result<GeneralMesh> {
    let poly = if mesh.tags.is_some() && unity_margin > 0.0 { add_halo(mesh, unity_margin)? } else { mesh.clone() };
    Ok(from_polygons(poly, 0.0))
}

/// P1 hat functions on a triangulation; every node is a cell.
pub fn hat_mesh_from_triangulation(tri: Triangulation, domain: Domain) -> Result<GeneralMesh> {
    let n = tri.nodes.len();
    let mut volumes = vec![0.0; n];
    let mut moments = vec![[0.0; 2]; n];
    for (t, tr) in tri.triangles.iter().enumerate() {
        let a = tri.areas[t];
        let p = tr.map(|v| tri.nodes[v]);
        for k in 0..3 {
            volumes[tr[k]] += a / 3.0;
            let s = geom::add(geom::scale(p[k], 2.0), geom::add(p[(k + 1) % 3], p[(k + 2) % 3]));
            moments[tr[k]] = geom::add(moments[tr[k]], geom::scale(s, a / 12.0));
        }
    }
    let mut barycenters = Vec::with_capacity(n);
    let mut supports = Vec::with_capacity(n);
    let mut diam = Vec::with_capacity(n);
    let mut interior = Vec::with_capacity(n);
    let mut in_domain = Vec::with_capacity(n);
    for i in 0..n {
        if tri.node_triangles[i].is_empty() {
            return Err(Error::DegenerateCell(i, 0.0));
        }
        barycenters.push(geom::scale(moments[i], 1.0 / volumes[i]));
        let star: Vec<Vec2> = tri.node_triangles[i].iter().flat_map(|&t| tri.triangles[t].map(|v| tri.nodes[v])).collect();
        supports.push(geom::bbox(&star));
        diam.push(geom::polygon_diameter(&star));
        interior.push(domain.contains_hull_with_margin(&star, 0.0));
        in_domain.push(tri.node_triangles[i].iter().any(|&t| {
            let p: Vec<Vec2> = tri.triangles[t].iter().map(|&v| tri.nodes[v]).collect();
            domain.meets_hull_with_margin(&p, 0.0)
        }));
    }
    let edges: Vec<Edge> = tri.edges.iter().enumerate().map(|(e, &[a, b])| Edge { i: a, j: b, face: e }).collect();
    let edge_interior = (0..tri.edges.len())
        .map(|e| {
            let pts: Vec<Vec2> = tri.edge_triangles[e].iter().flat_map(|&t| tri.triangles[t].map(|v| tri.nodes[v])).collect();
            domain.contains_hull_with_margin(&pts, 0.0)
        })
        .collect();
    Ok(finish(
        CellKind::Hat { tri },
        domain,
        volumes,
        barycenters,
        supports,
        diam,
        edges,
        interior,
        in_domain,
        edge_interior,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_core::generators::{build_alternating_mesh, build_cartesian_mesh};
    use rand::{Rng, SeedableRng};

    #[test]
    fn partition_of_unity_mollified() {
        let m = build_alternating_mesh(0.125, Domain::unit_square()).unwrap();
        let g = mollify_polygon_mesh_with(&m, m.delta_x, 0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert!((g.unity(x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_point_is_indicator() {
        let m = build_cartesian_mesh(2, 2, Domain::unit_square()).unwrap();
        let g = mollify_polygon_mesh_with(&m, 0.1, 0.5).unwrap();
        let x = [0.25, 0.25];
        for i in 0..g.n_cells() {
            let expect = if i == 0 { 1.0 } else { 0.0 };
            assert!((g.chi(i, x) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn hat_volume_one_triangle() {
        let tri = Triangulation::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let g = hat_mesh_from_triangulation(tri, Domain::rect([-1.0, -1.0], [3.0, 3.0])).unwrap();
        for v in &g.volumes {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hat_face_identity() {
        let tri = Triangulation::rectangle([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let g = hat_mesh_from_triangulation(tri, Domain::unit_square()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            for i in 0..g.n_cells() {
                let mut s = g.grad_chi(i, x);
                for &e in &g.cell_edges[i] {
                    let j = g.edges[e].other(i);
                    s = geom::add(s, g.face_fn_directed(e, j, x));
                }
                assert!(geom::norm(s) < 1e-12);
            }
        }
    }
}
