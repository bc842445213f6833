use serde::{Deserialize, Serialize};

use super::general::GeneralMesh;
use crate::geom;

/// Default uniform constant the per-cell and per-face checks are measured against.
pub const DEFAULT_STRUCTURAL_CONSTANT: f64 = 16.0;

/// Measured constants of the structural mesh assumptions.
///
/// Length scales are compared with `ℓ = (min_i π_i)^{1/d}` and with δx.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StructuralReport {
    pub delta_x: f64,
    /// max diam(supp χ_i) / ℓ.
    pub diameter_ratio: f64,
    /// min and max of π_i / δx^d.
    pub volume_min: f64,
    pub volume_max: f64,
    /// max π_i / min π_i.
    pub volume_spread: f64,
    /// δx·max‖n_{i,j}‖_∞ for mollified and hat meshes; max |S_{i,j}|/δx^{d-1} for sharp cells.
    pub face_bound: f64,
    /// Largest number of supports meeting a ball of radius δx centred at a barycenter.
    pub max_cells_per_ball: usize,
    /// Constant the pass flags refer to.
    pub constant: f64,
    pub cell_pass: Vec<bool>,
    pub face_pass: Vec<bool>,
}

impl StructuralReport {
    /// Smallest C for which all four inequalities hold.
    pub fn tight_constant(&self) -> f64 {
        self.diameter_ratio
            .max(1.0 / self.volume_min)
            .max(self.face_bound)
            .max(self.max_cells_per_ball as f64)
    }
}

/// Structural report with the default constant.
pub fn validate_structural(mesh: &GeneralMesh) -> StructuralReport {
    validate_structural_with(mesh, DEFAULT_STRUCTURAL_CONSTANT)
}

fn face_sup(mesh: &GeneralMesh, e: usize) -> f64 {
    match &mesh.kind {
        super::general::CellKind::Polygon { poly, radius } => {
            let face = &poly.faces[mesh.edges[e].face];
            if *radius == 0.0 {
                face.area / mesh.delta_x
            } else {
                // the sup of |S ∩ B_r(x)| over x is bounded by the face length and by 2r
                face.segments
                    .iter()
                    .map(|s| geom::dist(poly.vertices[s[0]], poly.vertices[s[1]]))
                    .sum::<f64>()
                    .min(2.0 * radius * face.segments.len() as f64)
                    / (std::f64::consts::PI * radius * radius)
                    * mesh.delta_x
            }
        }
        super::general::CellKind::Hat { tri } => {
            // |χ_j∇χ_i − χ_i∇χ_j| ≤ max over the edge triangles of the larger gradient
            let ed = mesh.edges[e];
            tri.edge_triangles[ed.face]
                .iter()
                .map(|&t| {
                    let gi = tri.grads[t][tri.local(t, ed.i).unwrap()];
                    let gj = tri.grads[t][tri.local(t, ed.j).unwrap()];
                    geom::norm(gi).max(geom::norm(gj)).max(geom::norm(geom::sub(gi, gj)) * 0.5)
                })
                .fold(0.0, f64::max)
                * mesh.delta_x
        }
    }
}

/// Structural report measured against a given constant.
pub fn validate_structural_with(mesh: &GeneralMesh, constant: f64) -> StructuralReport {
    let d = 2.0;
    let dx = mesh.delta_x;
    let n = mesh.n_cells();
    let vmin = mesh.volumes.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = mesh.volumes.iter().cloned().fold(0.0, f64::max);
    let ell = vmin.powf(1.0 / d);
    let dmax = mesh.support_diameters.iter().cloned().fold(0.0, f64::max);
    let mut counts = vec![0usize; n];
    for i in 0..n {
        let c = mesh.barycenters[i];
        let mut k = 0;
        let mut seen = std::collections::HashSet::new();
        let grid_r = dx;
        for dxk in [-1.0, 0.0, 1.0] {
            for dyk in [-1.0, 0.0, 1.0] {
                for &j in mesh.candidates([c[0] + dxk * grid_r, c[1] + dyk * grid_r]) {
                    if seen.insert(j) {
                        let (lo, hi) = mesh.supports[j];
                        let q = [c[0].clamp(lo[0], hi[0]), c[1].clamp(lo[1], hi[1])];
                        if geom::dist(q, c) < dx {
                            k += 1;
                        }
                    }
                }
            }
        }
        counts[i] = k;
    }
    let faces: Vec<f64> = (0..mesh.n_edges()).map(|e| face_sup(mesh, e)).collect();
    let cell_pass = (0..n)
        .map(|i| {
            mesh.support_diameters[i] / ell <= constant
                && mesh.volumes[i] / dx.powf(d) >= 1.0 / constant
                && counts[i] as f64 <= constant
        })
        .collect();
    StructuralReport {
        delta_x: dx,
        diameter_ratio: dmax / ell,
        volume_min: vmin / dx.powf(d),
        volume_max: vmax / dx.powf(d),
        volume_spread: vmax / vmin,
        face_bound: faces.iter().cloned().fold(0.0, f64::max),
        max_cells_per_ball: counts.iter().cloned().max().unwrap_or(0),
        constant,
        cell_pass,
        face_pass: faces.iter().map(|&f| f <= constant).collect(),
    }
}
