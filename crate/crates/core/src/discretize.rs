//! Projections to cells and faces, the discrete divergence and discrete L^p norms.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, BallRule, TriangleRule, Vec2};
use crate::mesh_core::{CellKind, GeneralMesh};

/// Per-cell values, zero outside V_Ω°.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellValues<T = f64> {
    pub values: Vec<T>,
}

/// Per-cell vectors (projected fields, coordinates, residues).
pub type CellVectors = CellValues<Vec2>;

impl<T: Copy + Default> CellValues<T> {
    pub fn zeros(n: usize) -> Self {
        CellValues { values: vec![T::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl CellValues<f64> {
    /// Columnar text `index value`, one cell per line.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("index value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i} {v:e}");
        }
        s
    }

    /// Σ v_i π_i.
    pub fn mass(&self, mesh: &GeneralMesh) -> f64 {
        self.values.iter().zip(&mesh.volumes).map(|(u, p)| u * p).sum()
    }
}

impl CellValues<Vec2> {
    pub fn to_columns(&self) -> String {
        let mut s = String::from("index x y\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i} {:e} {:e}", v[0], v[1]);
        }
        s
    }

    pub fn component(&self, k: usize) -> CellValues {
        CellValues { values: self.values.iter().map(|v| v[k]).collect() }
    }
}

/// Upwind coefficients on the directed edges: `values[e] = [a_{i,j}, a_{j,i}]`
/// for the stored orientation `(i, j)` of edge `e`. a_{i,j} is the transfer from j into i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceCoeffs {
    pub values: Vec<[f64; 2]>,
    /// Evaluation time of a time-dependent field.
    pub time: Option<f64>,
}

impl FaceCoeffs {
    pub fn zeros(n_edges: usize) -> Self {
        FaceCoeffs { values: vec![[0.0; 2]; n_edges], time: None }
    }

    /// a_{to, from} across edge `e`, where `to` is one of its cells.
    pub fn into_cell(&self, mesh: &GeneralMesh, e: usize, to: usize) -> f64 {
        if mesh.edges[e].i == to {
            self.values[e][0]
        } else {
            self.values[e][1]
        }
    }

    /// a_{from', to} with `from` one of the cells of `e`: transfer out of `from`.
    pub fn out_of_cell(&self, mesh: &GeneralMesh, e: usize, from: usize) -> f64 {
        if mesh.edges[e].i == from {
            self.values[e][1]
        } else {
            self.values[e][0]
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        FaceCoeffs { values: self.values.iter().map(|[a, b]| [a * s, b * s]).collect(), time: self.time }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// Columnar text `to from value`, one directed edge per line.
    pub fn to_columns(&self, mesh: &GeneralMesh) -> String {
        let mut s = String::from("to from value\n");
        for (e, v) in self.values.iter().enumerate() {
            let ed = mesh.edges[e];
            let _ = writeln!(s, "{} {} {:e}", ed.i, ed.j, v[0]);
            let _ = writeln!(s, "{} {} {:e}", ed.j, ed.i, v[1]);
        }
        s
    }
}

/// Quadrature point counts and the seed that rotates the ball rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss points per face segment (and per direction on hat triangles).
    pub face_points: usize,
    /// Collapsed Gauss points per direction on cell triangles.
    pub cell_points: usize,
    pub ball_rings: usize,
    pub ball_angles: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { face_points: 8, cell_points: 4, ball_rings: 8, ball_angles: 16, seed: 0 }
    }
}

impl QuadratureSpec {
    /// Every point count doubled.
    pub fn refine(&self) -> Self {
        QuadratureSpec {
            face_points: 2 * self.face_points,
            cell_points: 2 * self.cell_points,
            ball_rings: 2 * self.ball_rings,
            ball_angles: 2 * self.ball_angles,
            seed: self.seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.face_points == 0 || self.cell_points == 0 || self.ball_rings == 0 || self.ball_angles == 0 {
            return Err(Error::InvalidParameter("quadrature point counts must be positive".into()));
        }
        Ok(())
    }

    /// Unit-disc averaging rule, rotated by a seed-dependent angle (seed 0: no rotation).
    pub fn ball_rule(&self) -> BallRule {
        let rule = BallRule::midpoint(self.ball_rings, self.ball_angles);
        if self.seed == 0 {
            rule
        } else {
            let a = ChaCha8Rng::seed_from_u64(self.seed).gen::<f64>() * std::f64::consts::TAU;
            rule.rotated(a)
        }
    }
}

/// Quadrature nodes `(x, w)` with Σ w g(x) ≈ ∫ g χ_i.
pub fn cell_quadrature(mesh: &GeneralMesh, i: usize, spec: &QuadratureSpec) -> Vec<(Vec2, f64)> {
    let tri_rule = TriangleRule::collapsed(spec.cell_points);
    match &mesh.kind {
        CellKind::Polygon { poly, radius } => {
            let p = poly.polygon(i);
            let mut pts = vec![];
            for k in 1..p.len() - 1 {
                pts.extend(tri_rule.map(p[0], p[k], p[k + 1]));
            }
            if *radius == 0.0 {
                pts
            } else {
                let ball = spec.ball_rule();
                let mut out = Vec::with_capacity(pts.len() * ball.len());
                for (y, w) in pts {
                    for (z, wz) in ball.points.iter().zip(&ball.weights) {
                        out.push((geom::add(y, geom::scale(*z, *radius)), w * wz));
                    }
                }
                out
            }
        }
        CellKind::Hat { tri } => {
            let mut out = vec![];
            for &t in &tri.node_triangles[i] {
                let k = tri.local(t, i).unwrap();
                let [a, b, c] = tri.triangles[t].map(|v| tri.nodes[v]);
                for (x, w) in tri_rule.map(a, b, c) {
                    out.push((x, w * tri.barycentric(t, x)[k]));
                }
            }
            out
        }
    }
}

/// (P_C f)_i = (1/π_i)∫ f χ_i on V_Ω°, 0 elsewhere.
pub fn project_to_cell<F>(mesh: &GeneralMesh, f: F, spec: &QuadratureSpec) -> Result<CellValues>
where
    F: Fn(Vec2) -> f64 + Sync,
{
    spec.check()?;
    let values = (0..mesh.n_cells())
        .into_par_iter()
        .map(|i| {
            if !mesh.interior[i] {
                return Ok(0.0);
            }
            let s: f64 = cell_quadrature(mesh, i, spec).iter().map(|&(x, w)| w * f(x)).sum();
            let v = s / mesh.volumes[i];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation(i))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CellValues { values })
}

/// Componentwise P_C of a vector field.
pub fn project_to_cell_vector<F>(mesh: &GeneralMesh, f: F, spec: &QuadratureSpec) -> Result<CellVectors>
where
    F: Fn(Vec2) -> Vec2 + Sync,
{
    spec.check()?;
    let values = (0..mesh.n_cells())
        .into_par_iter()
        .map(|i| {
            if !mesh.interior[i] {
                return Ok([0.0, 0.0]);
            }
            let mut s = [0.0, 0.0];
            for (x, w) in cell_quadrature(mesh, i, spec) {
                s = geom::add(s, geom::scale(f(x), w));
            }
            let v = geom::scale(s, 1.0 / mesh.volumes[i]);
            if v[0].is_finite() && v[1].is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation(i))
            }
        })
        .collect::<Result<Vec<Vec2>>>()?;
    Ok(CellValues { values })
}

/// ∫_a^b g⁺ along a segment, split at the sign changes of g found on a scan grid.
fn segment_positive_integral(a: Vec2, b: Vec2, g: &dyn Fn(Vec2) -> f64, gauss: &(Vec<f64>, Vec<f64>)) -> f64 {
    let len = geom::dist(a, b);
    let at = |t: f64| g(geom::add(a, geom::scale(geom::sub(b, a), t)));
    let n = gauss.0.len().max(2);
    let mut breaks = vec![0.0];
    let mut prev = at(0.0);
    for k in 1..=n {
        let t0 = (k - 1) as f64 / n as f64;
        let t1 = k as f64 / n as f64;
        let cur = at(t1);
        if prev * cur < 0.0 {
            let (mut lo, mut hi, mut flo) = (t0, t1, prev);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = at(mid);
                if fm * flo > 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-16 {
                    break;
                }
            }
            breaks.push(0.5 * (lo + hi));
        } else if cur == 0.0 && k < n {
            breaks.push(t1);
        }
        prev = cur;
    }
    breaks.push(1.0);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= t0 {
            continue;
        }
        let mut s = 0.0;
        for (x, wt) in gauss.0.iter().zip(&gauss.1) {
            let t = t0 + 0.5 * (x + 1.0) * (t1 - t0);
            s += wt * at(t).max(0.0);
        }
        total += 0.5 * (t1 - t0) * s;
    }
    total * len
}

/// ∫_a^b g along a segment.
fn segment_integral(a: Vec2, b: Vec2, g: &dyn Fn(Vec2) -> f64, gauss: &(Vec<f64>, Vec<f64>)) -> f64 {
    let len = geom::dist(a, b);
    let mut s = 0.0;
    for (x, w) in gauss.0.iter().zip(&gauss.1) {
        let t = 0.5 * (x + 1.0);
        s += w * g(geom::add(a, geom::scale(geom::sub(b, a), t)));
    }
    0.5 * s * len
}

/// Exact ∫_T f⁺ for f linear on the triangle with vertex values `fv`.
fn triangle_positive_linear(p: [Vec2; 3], grads: &[Vec2; 3], fv: [f64; 3]) -> f64 {
    let mut n = [0.0, 0.0];
    for k in 0..3 {
        n = geom::add(n, geom::scale(grads[k], fv[k]));
    }
    let c = fv[0] - geom::dot(n, p[0]);
    let clipped = geom::clip_halfplane(&p, n, c);
    if clipped.len() < 3 {
        return 0.0;
    }
    let area = geom::polygon_area(&clipped).abs();
    let cen = geom::polygon_centroid(&clipped);
    (area * (geom::dot(n, cen) + c)).max(0.0)
}

fn edge_coeffs<F>(mesh: &GeneralMesh, e: usize, b: &F, spec: &QuadratureSpec, ball: &BallRule, positive_inside: bool) -> [f64; 2]
where
    F: Fn(Vec2) -> Vec2 + Sync,
{
    let ed = mesh.edges[e];
    let gauss = geom::gauss_legendre(spec.face_points);
    match &mesh.kind {
        CellKind::Polygon { poly, radius } => {
            let face = &poly.faces[ed.face];
            let nrm = face.normal;
            let offsets: Vec<(Vec2, f64)> = if *radius == 0.0 {
                vec![([0.0, 0.0], 1.0)]
            } else {
                ball.points.iter().zip(&ball.weights).map(|(z, w)| (geom::scale(*z, *radius), *w)).collect()
            };
            let mut out = [0.0, 0.0];
            let mut signed = 0.0;
            for (z, wz) in offsets {
                for s in &face.segments {
                    let a = geom::add(poly.vertices[s[0]], z);
                    let c = geom::add(poly.vertices[s[1]], z);
                    if positive_inside {
                        let gp = |x: Vec2| geom::dot(b(x), nrm);
                        let gm = |x: Vec2| -geom::dot(b(x), nrm);
                        out[0] += wz * segment_positive_integral(a, c, &gp, &gauss);
                        out[1] += wz * segment_positive_integral(a, c, &gm, &gauss);
                    } else {
                        let g = |x: Vec2| geom::dot(b(x), nrm);
                        signed += wz * segment_integral(a, c, &g, &gauss);
                    }
                }
            }
            if positive_inside {
                out
            } else {
                [signed.max(0.0), (-signed).max(0.0)]
            }
        }
        CellKind::Hat { tri } => {
            let rule = TriangleRule::collapsed(spec.face_points);
            let mut out = [0.0, 0.0];
            for &t in &tri.edge_triangles[ed.face] {
                let ki = tri.local(t, ed.i).unwrap();
                let kj = tri.local(t, ed.j).unwrap();
                let g = tri.grads[t];
                let [pa, pb, pc] = tri.triangles[t].map(|v| tri.nodes[v]);
                for (x, w) in rule.map(pa, pb, pc) {
                    let l = tri.barycentric(t, x);
                    let n = geom::sub(geom::scale(g[ki], l[kj]), geom::scale(g[kj], l[ki]));
                    let v = geom::dot(b(x), n);
                    out[0] += w * v.max(0.0);
                    out[1] += w * (-v).max(0.0);
                }
            }
            out
        }
    }
}

/// a_{i,j} = ∫ (b·n_{i,j})⁺ on E_Ω°, zero elsewhere.
///
/// Mollified polygon faces are integrated as S_{i,j} × B_r; sharp faces are split
/// at sign changes of b·N before Gauss integration.
pub fn project_to_face<F>(mesh: &GeneralMesh, b: F, spec: &QuadratureSpec) -> Result<FaceCoeffs>
where
    F: Fn(Vec2) -> Vec2 + Sync,
{
    project_faces(mesh, &b, spec, true)
}

/// a_{i,j} = (∫ b·n_{i,j})⁺; requires face functions of the form N_{i,j} w_{i,j}.
pub fn project_to_face_alt<F>(mesh: &GeneralMesh, b: F, spec: &QuadratureSpec) -> Result<FaceCoeffs>
where
    F: Fn(Vec2) -> Vec2 + Sync,
{
    if let CellKind::Hat { .. } = mesh.kind {
        if let Some(e) = (0..mesh.n_edges()).find(|&e| mesh.edge_interior[e]) {
            return Err(Error::NonFactorable(e));
        }
    }
    project_faces(mesh, &b, spec, false)
}

fn project_faces<F>(mesh: &GeneralMesh, b: &F, spec: &QuadratureSpec, positive_inside: bool) -> Result<FaceCoeffs>
where
    F: Fn(Vec2) -> Vec2 + Sync,
{
    spec.check()?;
    let ball = spec.ball_rule();
    let values = (0..mesh.n_edges())
        .into_par_iter()
        .map(|e| {
            if !mesh.edge_interior[e] {
                return Ok([0.0, 0.0]);
            }
            let v = edge_coeffs(mesh, e, b, spec, &ball, positive_inside);
            if v[0].is_finite() && v[1].is_finite() {
                Ok(v)
            } else {
                Err(Error::Quadrature(e))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FaceCoeffs { values, time: None })
}

/// Exact P_F of a field that is constant on every triangle of a hat mesh.
pub fn project_to_face_piecewise_constant(mesh: &GeneralMesh, b: &[Vec2]) -> Result<FaceCoeffs> {
    let CellKind::Hat { tri } = &mesh.kind else {
        return Err(Error::Mismatch("piecewise-constant projection needs a hat mesh".into()));
    };
    if b.len() != tri.triangles.len() {
        return Err(Error::Mismatch(format!("{} field values for {} triangles", b.len(), tri.triangles.len())));
    }
    let values = (0..mesh.n_edges())
        .into_par_iter()
        .map(|e| {
            if !mesh.edge_interior[e] {
                return [0.0, 0.0];
            }
            let ed = mesh.edges[e];
            let mut out = [0.0, 0.0];
            for &t in &tri.edge_triangles[ed.face] {
                let ki = tri.local(t, ed.i).unwrap();
                let kj = tri.local(t, ed.j).unwrap();
                let g = tri.grads[t];
                let p = tri.triangles[t].map(|v| tri.nodes[v]);
                // f = b·(λ_j g_i − λ_i g_j): value b·g_i at node j, −b·g_j at node i, 0 at the third
                let mut fv = [0.0; 3];
                fv[kj] = geom::dot(b[t], g[ki]);
                fv[ki] = -geom::dot(b[t], g[kj]);
                out[0] += triangle_positive_linear(p, &g, fv);
                out[1] += triangle_positive_linear(p, &g, fv.map(|v| -v));
            }
            out
        })
        .collect();
    Ok(FaceCoeffs { values, time: None })
}

/// Self-estimate of the face quadrature error: max |P_F(spec) − P_F(refined spec)|.
pub fn face_error_estimate<F>(mesh: &GeneralMesh, b: F, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(Vec2) -> Vec2 + Sync,
{
    let a = project_to_face(mesh, &b, spec)?;
    let r = project_to_face(mesh, &b, &spec.refine())?;
    Ok(a.values
        .iter()
        .zip(&r.values)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .fold(0.0, f64::max))
}

/// D_k = (1/π_k)Σ_i (a_{i,k} − a_{k,i}) on V_Ω°, 0 elsewhere.
pub fn discrete_divergence(mesh: &GeneralMesh, a: &FaceCoeffs) -> Result<CellValues> {
    let mut d = discrete_divergence_full(mesh, a)?;
    for (k, v) in d.values.iter_mut().enumerate() {
        if !mesh.interior[k] {
            *v = 0.0;
        }
    }
    Ok(d)
}

/// The divergence formula evaluated on every cell, without the V_Ω° mask.
pub fn discrete_divergence_full(mesh: &GeneralMesh, a: &FaceCoeffs) -> Result<CellValues> {
    if a.values.len() != mesh.n_edges() {
        return Err(Error::Mismatch(format!("{} coefficients for {} edges", a.values.len(), mesh.n_edges())));
    }
    let mut d = vec![0.0; mesh.n_cells()];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        // outflow of j is a_{i,j}, outflow of i is a_{j,i}
        d[ed.j] += aij - aji;
        d[ed.i] += aji - aij;
    }
    for (k, v) in d.iter_mut().enumerate() {
        *v /= mesh.volumes[k];
    }
    Ok(CellValues { values: d })
}

/// Which discrete norm to take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Cell,
    Face,
}

/// Cell: (Σ|v_i|^p π_i)^{1/p}; face: (Σ|a|^p)^{1/p}(δx)^{d/p−(d−1)} over the
/// directed coefficients; p = ∞ takes the sup of the stored values.
pub fn discrete_norm(mesh: &GeneralMesh, values: &[f64], p: f64, kind: NormKind) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("norm exponent must be ≥ 1, got {p}")));
    }
    let d = 2.0;
    match kind {
        NormKind::Cell => {
            if values.len() != mesh.n_cells() {
                return Err(Error::Mismatch("cell norm needs one value per cell".into()));
            }
            if p.is_infinite() {
                return Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
            let s: f64 = values.iter().zip(&mesh.volumes).map(|(v, w)| v.abs().powf(p) * w).sum();
            Ok(s.powf(1.0 / p))
        }
        NormKind::Face => {
            let scale = mesh.delta_x.powf(d / p - (d - 1.0));
            if p.is_infinite() {
                return Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale);
            }
            let s: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
            Ok(s.powf(1.0 / p) * scale)
        }
    }
}

pub fn cell_norm(mesh: &GeneralMesh, u: &CellValues, p: f64) -> Result<f64> {
    discrete_norm(mesh, &u.values, p, NormKind::Cell)
}

pub fn face_norm(mesh: &GeneralMesh, a: &FaceCoeffs, p: f64) -> Result<f64> {
    let flat: Vec<f64> = a.values.iter().flat_map(|v| *v).collect();
    discrete_norm(mesh, &flat, p, NormKind::Face)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_core::*;

    fn sharp_unit_cells() -> GeneralMesh {
        // two unit squares [-1,0]×[-1/2,1/2] and [0,1]×[-1/2,1/2]
        let v = vec![[-1.0, -0.5], [0.0, -0.5], [1.0, -0.5], [1.0, 0.5], [0.0, 0.5], [-1.0, 0.5]];
        let cells = vec![vec![0, 1, 4, 5], vec![1, 2, 3, 4]];
        let m = build_polygon_mesh(v, cells, Domain::rect([-1.0, -0.5], [1.0, 0.5])).unwrap();
        sharp_polygon_mesh(&m, 0.0).unwrap()
    }

    #[test]
    fn x_squared_on_unit_square() {
        let m = build_cartesian_mesh(1, 1, Domain::unit_square()).unwrap();
        let g = sharp_polygon_mesh(&m, 0.0).unwrap();
        let p = project_to_cell(&g, |x| x[0] * x[0], &QuadratureSpec::default()).unwrap();
        assert!((p.values[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kinked_face_is_one_eighth() {
        let g = sharp_unit_cells();
        let spec = QuadratureSpec::default();
        let a = project_to_face(&g, |x| [x[1], 0.0], &spec).unwrap();
        assert!((a.values[0][0] - 0.125).abs() < 1e-15 && (a.values[0][1] - 0.125).abs() < 1e-15);
        let alt = project_to_face_alt(&g, |x| [x[1], 0.0], &spec).unwrap();
        assert!(alt.values[0][0].abs() < 1e-15 && alt.values[0][1].abs() < 1e-15);
    }

    #[test]
    fn piecewise_constant_matches_quadrature() {
        let tri = Triangulation::rectangle([0.0, 0.0], [1.0, 1.0], 3, 3).unwrap();
        let g = hat_mesh_from_triangulation(tri, Domain::rect([-0.1, -0.1], [1.1, 1.1])).unwrap();
        let t = g.triangulation().unwrap();
        let bt: Vec<Vec2> = (0..t.triangles.len()).map(|k| [(k as f64).sin(), (k as f64 * 0.7).cos()]).collect();
        let exact = project_to_face_piecewise_constant(&g, &bt).unwrap();
        let locate = |x: Vec2| {
            (0..t.triangles.len()).find(|&k| t.barycentric(k, x).iter().all(|&l| l >= -1e-12)).unwrap()
        };
        let spec = QuadratureSpec { face_points: 64, ..Default::default() };
        // quadrature cannot see the triangle of a point on an interior edge; the rule has no such nodes
        let q = project_to_face(&g, |x| bt[locate(x)], &spec).unwrap();
        for (a, b) in exact.values.iter().zip(&q.values) {
            assert!((a[0] - b[0]).abs() < 1e-3 && (a[1] - b[1]).abs() < 1e-3);
        }
    }
}
