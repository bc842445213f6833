//! Kernels K^h, discrete log-scale semi-norms on virtual coordinates, the
//! mollification gap, kernel-equivalence checks, the Kruzkov decomposition and
//! a discrete fractional Sobolev norm.

use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::discretize::{discrete_divergence_full, CellValues, FaceCoeffs};
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::mesh_core::{CellKind, GeneralMesh};
use crate::spatial::BucketGrid;
use crate::upwind::assemble_rhs;

/// Cutoff profile: 1 on [0, 1], quintic smoothstep down to 0 on [1, 2], 0 beyond.
pub fn cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let t = r - 1.0;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Kernel K^h(x) = φ(|x|)/(|x| + h)^d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub h: f64,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(h: f64, dim: usize) -> Result<Self> {
        if !(h > 0.0 && h < 0.5) {
            return Err(Error::InvalidParameter(format!("kernel width h must lie in (0, 1/2), got {h}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(KernelSpec { h, dim })
    }

    /// K^h at distance r.
    pub fn radial(&self, r: f64) -> f64 {
        cutoff(r) / (r + self.h).powi(self.dim as i32)
    }
}

/// K^h(x).
pub fn kernel_eval(k: &KernelSpec, x: &[f64]) -> f64 {
    k.radial(x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Parameters of the semi-norm ‖·‖_{h₀,p,θ}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiNormParams {
    pub h0: f64,
    pub p: f64,
    pub theta: f64,
    pub n_h: usize,
    /// Conjugate exponent used by the divergence semi-norm.
    pub p_star: Option<f64>,
}

impl SemiNormParams {
    pub fn new(h0: f64, p: f64, theta: f64) -> Result<Self> {
        let s = SemiNormParams { h0, p, theta, n_h: 24, p_star: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.h0 < 0.5) {
            return Err(Error::InvalidParameter(format!("h0 must lie in (0, 1/2), got {}", self.h0)));
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!("p must be a finite exponent ≥ 1, got {}", self.p)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter("θ must be finite".into()));
        }
        if self.n_h == 0 {
            return Err(Error::InvalidParameter("empty h-grid".into()));
        }
        Ok(())
    }

    /// Geometric grid on [h₀, 1/2] with both endpoints.
    pub fn h_grid(&self) -> Vec<f64> {
        if self.n_h == 1 {
            return vec![self.h0];
        }
        let (a, b) = (self.h0.ln(), 0.5f64.ln());
        (0..self.n_h)
            .map(|k| {
                if k == self.n_h - 1 {
                    0.5
                } else if k == 0 {
                    self.h0
                } else {
                    (a + (b - a) * k as f64 / (self.n_h - 1) as f64).exp()
                }
            })
            .collect()
    }

    /// Parameters of the divergence semi-norm with log-exponent p(θ − 1/p*).
    /// The second value flags a negative exponent; it is reported, not clamped.
    pub fn divergence_params(&self) -> Result<(SemiNormParams, bool)> {
        let ps = self
            .p_star
            .ok_or_else(|| Error::InvalidParameter("divergence semi-norm needs p*".into()))?;
        let e = self.p * (self.theta - 1.0 / ps);
        if e < 0.0 {
            log::warn!("divergence semi-norm log-exponent {e} is negative");
        }
        Ok((SemiNormParams { theta: e, ..self.clone() }, e < 0.0))
    }
}

/// Per-cell points x̃_i in R^d, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualCoordinates {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl VirtualCoordinates {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::InvalidParameter("coordinate array does not match dimension".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("coordinates must be finite".into()));
        }
        Ok(VirtualCoordinates { dim, coords })
    }

    pub fn from_points(points: &[Vec2]) -> Self {
        VirtualCoordinates { dim: 2, coords: points.iter().flat_map(|p| [p[0], p[1]]).collect() }
    }

    pub fn barycenters(mesh: &GeneralMesh) -> Self {
        Self::from_points(&mesh.barycenters)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point2(&self, i: usize) -> Vec2 {
        [self.coords[2 * i], self.coords[2 * i + 1]]
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// max_i |x_i − y_i|.
    pub fn max_drift(&self, other: &VirtualCoordinates) -> f64 {
        (0..self.len())
            .map(|i| self.point(i).iter().zip(other.point(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Result of a semi-norm scan over the h-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiNormScan {
    /// (h, raw double sum, |log h|^{−θ}·raw).
    pub rows: Vec<(f64, f64, f64)>,
    /// sup of the weighted values.
    pub value: f64,
    /// value^{1/p}.
    pub norm: f64,
    pub argmax_h: f64,
}

impl SemiNormScan {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "h,raw_double_sum,weighted_value")?;
        for (h, raw, wv) in &self.rows {
            writeln!(w, "{h:e},{raw:e},{wv:e}")?;
        }
        Ok(())
    }
}

/// Visit each unordered pair with |x_i − x_j| < radius and at least one nonzero
/// value exactly once, in a fixed order; `f(i, j, r)`. Work is split over the
/// support cells and merged in order.
fn pair_sums<F>(coords: &VirtualCoordinates, u: &[f64], radius: f64, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, usize, f64, &mut [f64]) + Sync,
{
    let n = coords.len();
    let grid = BucketGrid::from_points(&coords.coords, coords.dim, radius);
    let supp: Vec<usize> = (0..n).filter(|&i| u[i] != 0.0).collect();
    let parts: Vec<Vec<f64>> = supp
        .par_iter()
        .map(|&i| {
            let mut acc = vec![0.0; width];
            grid.for_each_candidate(coords.point(i), radius, |j| {
                // pairs inside the support are visited from their smaller index only
                if j == i || (u[j] != 0.0 && j < i) {
                    return;
                }
                let r = coords.dist(i, j);
                if r < radius {
                    f(i, j, r, &mut acc);
                }
            });
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Semi-norm of values `u` on points with weights `volumes` (dimension-generic).
pub fn seminorm_points(volumes: &[f64], u: &[f64], params: &SemiNormParams, coords: &VirtualCoordinates) -> Result<SemiNormScan> {
    params.validate()?;
    if volumes.len() != u.len() || coords.len() != u.len() {
        return Err(Error::Mismatch("values, volumes and coordinates differ in length".into()));
    }
    let hs = params.h_grid();
    let d = coords.dim as i32;
    let p = params.p;
    let raw = pair_sums(coords, u, 2.0, hs.len(), |i, j, r, acc| {
        // ordered pairs (i, j) and (j, i)
        let w = 2.0 * (u[i] - u[j]).abs().powf(p) * volumes[i] * volumes[j] * cutoff(r);
        if w == 0.0 {
            return;
        }
        for (a, h) in acc.iter_mut().zip(&hs) {
            *a += w / (r + h).powi(d);
        }
    });
    let rows: Vec<(f64, f64, f64)> = hs
        .iter()
        .zip(&raw)
        .map(|(&h, &s)| (h, s, s * h.ln().abs().powf(-params.theta)))
        .collect();
    let (mut value, mut argmax_h) = (f64::NEG_INFINITY, hs[0]);
    for &(h, _, w) in &rows {
        if w > value {
            value = w;
            argmax_h = h;
        }
    }
    Ok(SemiNormScan { rows, value, norm: value.powf(1.0 / p), argmax_h })
}

/// sup_h |log h|^{−θ} ΣΣ K̃^h_{i,j}|u_i − u_j|^p π_iπ_j on a mesh.
pub fn discrete_seminorm(mesh: &GeneralMesh, u: &CellValues, params: &SemiNormParams, coords: &VirtualCoordinates) -> Result<SemiNormScan> {
    seminorm_points(&mesh.volumes, &u.values, params, coords)
}

/// The kernel double sum ΣΣ K̃^h_{i,j}|u_i − u_j|^p π_iπ_j at one h.
pub fn kernel_double_sum(volumes: &[f64], u: &[f64], kernel: &KernelSpec, coords: &VirtualCoordinates, p: f64) -> f64 {
    pair_sums(coords, u, 2.0, 1, |i, j, r, acc| {
        acc[0] += 2.0 * kernel.radial(r) * (u[i] - u[j]).abs().powf(p) * volumes[i] * volumes[j];
    })[0]
}

/// Mollification gap ‖u^χ − K̄^h ⋆ u^χ‖_{L^p}^p with diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap_p: f64,
    pub spacing: f64,
    /// True when the extension used Voronoi regions of the barycenters.
    pub voronoi: bool,
    /// max_i |sampled area of the extension region − π_i| / π_i.
    pub volume_defect: f64,
}

fn fft2(data: &mut [Complex<f64>], nx: usize, ny: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let fx = if inverse { planner.plan_fft_inverse(nx) } else { planner.plan_fft_forward(nx) };
    let fy = if inverse { planner.plan_fft_inverse(ny) } else { planner.plan_fft_forward(ny) };
    for row in data.chunks_exact_mut(nx) {
        fx.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); ny];
    for x in 0..nx {
        for y in 0..ny {
            col[y] = data[y * nx + x];
        }
        fy.process(&mut col);
        for y in 0..ny {
            data[y * nx + x] = col[y];
        }
    }
}

/// Sampled gap between the piecewise-constant extension of `u` and its
/// convolution with the normalised kernel, on a grid of the given spacing.
pub fn mollification_gap(mesh: &GeneralMesh, u: &CellValues, h: f64, p: f64, spacing: f64) -> Result<GapReport> {
    let kernel = KernelSpec::new(h, 2)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be a finite exponent ≥ 1, got {p}")));
    }
    if !(spacing > 0.0) || spacing > 0.5 * mesh.delta_x * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "sampling spacing {spacing} is coarser than δx/2 = {}",
            0.5 * mesh.delta_x
        )));
    }
    if u.values.len() != mesh.n_cells() {
        return Err(Error::Mismatch("density length differs from cell count".into()));
    }
    let supp: Vec<usize> = (0..mesh.n_cells()).filter(|&i| u.values[i] != 0.0).collect();
    if supp.is_empty() {
        return Ok(GapReport { gap_p: 0.0, spacing, voronoi: false, volume_defect: 0.0 });
    }
    let voronoi = !matches!(mesh.kind, CellKind::Polygon { .. });
    let pts: Vec<Vec2> = supp.iter().flat_map(|&i| [mesh.supports[i].0, mesh.supports[i].1]).collect();
    let (lo, hi) = geom::bbox(&pts);
    let pad = 2.0 + spacing;
    let (x0, y0) = (lo[0] - pad, lo[1] - pad);
    let nx0 = ((hi[0] - lo[0] + 2.0 * pad) / spacing).ceil() as usize + 1;
    let ny0 = ((hi[1] - lo[1] + 2.0 * pad) / spacing).ceil() as usize + 1;
    let kr = (2.0 / spacing).ceil() as usize;
    let nx = (nx0 + 2 * kr + 1).next_power_of_two();
    let ny = (ny0 + 2 * kr + 1).next_power_of_two();
    let bary: Vec<f64> = mesh.barycenters.iter().flat_map(|b| [b[0], b[1]]).collect();
    let bary_grid = BucketGrid::from_points(&bary, 2, mesh.delta_x);
    let locate = |x: Vec2| -> Option<usize> {
        if let (false, Some(poly)) = (voronoi, mesh.polygon()) {
            mesh.candidates(x).iter().copied().find(|&c| geom::in_convex(&poly.polygon(c), x))
        } else {
            if !mesh.domain.contains(x) {
                return None;
            }
            let mut best = (f64::INFINITY, None);
            bary_grid.for_each_candidate(&x, 2.0 * mesh.delta_x, |c| {
                let d = geom::dist(mesh.barycenters[c], x);
                if d < best.0 {
                    best = (d, Some(c));
                }
            });
            best.1
        }
    };
    let mut field = vec![Complex::new(0.0, 0.0); nx * ny];
    let mut area = vec![0.0; mesh.n_cells()];
    let cell_area = spacing * spacing;
    for b in 0..ny0 {
        for a in 0..nx0 {
            let x = [x0 + a as f64 * spacing, y0 + b as f64 * spacing];
            if let Some(c) = locate(x) {
                field[b * nx + a].re = u.values[c];
                area[c] += cell_area;
            }
        }
    }
    let volume_defect = supp
        .iter()
        .map(|&i| (area[i] - mesh.volumes[i]).abs() / mesh.volumes[i])
        .fold(0.0, f64::max);
    // discrete kernel, wrapped around the origin and normalised to unit sum
    let mut ker = vec![Complex::new(0.0, 0.0); nx * ny];
    let mut ksum = 0.0;
    for dy in -(kr as i64)..=(kr as i64) {
        for dx in -(kr as i64)..=(kr as i64) {
            let r = ((dx * dx + dy * dy) as f64).sqrt() * spacing;
            let v = kernel.radial(r);
            if v > 0.0 {
                let ix = dx.rem_euclid(nx as i64) as usize;
                let iy = dy.rem_euclid(ny as i64) as usize;
                ker[iy * nx + ix].re = v;
                ksum += v;
            }
        }
    }
    let orig: Vec<f64> = field.iter().map(|c| c.re).collect();
    let mut planner = FftPlanner::new();
    fft2(&mut field, nx, ny, false, &mut planner);
    fft2(&mut ker, nx, ny, false, &mut planner);
    for (f, k) in field.iter_mut().zip(&ker) {
        *f *= *k;
    }
    fft2(&mut field, nx, ny, true, &mut planner);
    let norm = 1.0 / ((nx * ny) as f64 * ksum);
    let gap_p: f64 = field
        .iter()
        .zip(&orig)
        .map(|(c, o)| (o - c.re * norm).abs().powf(p))
        .sum::<f64>()
        * cell_area;
    Ok(GapReport { gap_p, spacing, voronoi, volume_defect })
}

/// Ratio of the semi-norms for two coordinate sets and the constant it implies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub value1: f64,
    pub value2: f64,
    /// value1 / value2.
    pub ratio: f64,
    /// Largest distance of either set from the barycenters.
    pub h2: f64,
    /// Smallest C with ratio ∈ [1/(1 + C h₂/h₀), 1 + C h₂/h₀].
    pub implied_constant: f64,
}

impl EquivalenceReport {
    pub fn within(&self, c: f64, h0: f64) -> bool {
        let b = 1.0 + c * self.h2 / h0;
        self.ratio <= b * (1.0 + 1e-12) && self.ratio >= 1.0 / b * (1.0 - 1e-12)
    }
}

/// Compare the semi-norms computed with two coordinate sets close to the barycenters.
pub fn coordinate_equivalence_ratio(
    mesh: &GeneralMesh,
    u: &CellValues,
    params: &SemiNormParams,
    c1: &VirtualCoordinates,
    c2: &VirtualCoordinates,
) -> Result<EquivalenceReport> {
    let bary = VirtualCoordinates::barycenters(mesh);
    if c1.dim != bary.dim || c2.dim != bary.dim || c1.len() != bary.len() || c2.len() != bary.len() {
        return Err(Error::Mismatch("coordinate sets do not match the mesh".into()));
    }
    let h2 = c1.max_drift(&bary).max(c2.max_drift(&bary));
    if h2 >= 1.0 / 16.0 {
        return Err(Error::InvalidParameter(format!("coordinate drift {h2} is not below 1/16")));
    }
    let v1 = discrete_seminorm(mesh, u, params, c1)?.value;
    let v2 = discrete_seminorm(mesh, u, params, c2)?.value;
    let ratio = if v2 == 0.0 && v1 == 0.0 { 1.0 } else { v1 / v2 };
    let dev = ratio.max(1.0 / ratio) - 1.0;
    let implied_constant = if h2 > 0.0 { dev * params.h0 / h2 } else { 0.0 };
    Ok(EquivalenceReport { value1: v1, value2: v2, ratio, h2, implied_constant })
}

/// Terms of the Kruzkov decomposition of the kernel double sum at one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KruzkovReport {
    pub t: f64,
    /// S = ΣΣ K_{ij}|u_i − u_j|π_iπ_j.
    pub double_sum: f64,
    /// A′ = ΣΣΣ (K_{i'j} − K_{ij}) a_{i',i}|u_i − u_j|π_j.
    pub a_k: f64,
    /// D′ = −ΣΣ K_{ij} s_{ij} D_i u_j π_iπ_j with the unmasked divergence.
    pub d_k: f64,
    /// R_K = 2ΣΣ K_{ij} s_{ij} R_i π_iπ_j.
    pub r_k: f64,
    /// N_K = ΣΣΣ K_{ij}(s_{i'j} − s_{ij}) a_{i,i'}(u_j − u_{i'})π_j ≤ 0.
    pub n_k: f64,
    /// dS/dt evaluated directly from the right-hand side: 2ΣΣ K s u̇_i π_iπ_j.
    pub ds_dt: f64,
}

impl KruzkovReport {
    /// 2(A′ + D′ + N) + R.
    pub fn decomposition(&self) -> f64 {
        2.0 * (self.a_k + self.d_k + self.n_k) + self.r_k
    }

    pub fn write_csv_header<W: Write>(mut w: W) -> Result<()> {
        writeln!(w, "t,double_sum,a_k,d_k,r_k,n_k,ds_dt,decomposition")?;
        Ok(())
    }

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t,
            self.double_sum,
            self.a_k,
            self.d_k,
            self.r_k,
            self.n_k,
            self.ds_dt,
            self.decomposition()
        )?;
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Exact sums of the Kruzkov decomposition; cost O(|E|·|V|) through dense kernel rows.
pub fn kruzkov_decomposition(
    mesh: &GeneralMesh,
    a: &FaceCoeffs,
    u: &CellValues,
    kernel: &KernelSpec,
    coords: &VirtualCoordinates,
) -> Result<KruzkovReport> {
    let n = mesh.n_cells();
    if coords.len() != n || u.values.len() != n {
        return Err(Error::Mismatch("state or coordinates do not match the mesh".into()));
    }
    let (rhs, leak) = assemble_rhs(mesh, a, u)?;
    let div = discrete_divergence_full(mesh, a)?;
    let pi = &mesh.volumes;
    let uv = &u.values;
    let k = |i: usize, j: usize| kernel.radial(coords.dist(i, j));
    let kmat: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| (0..n).map(|j| k(i, j)).collect()).collect();
    let s = |i: usize, j: usize| sign(uv[i] - uv[j]);
    let mut double_sum = 0.0;
    let mut d_k = 0.0;
    let mut r_k = 0.0;
    let mut ds_dt = 0.0;
    for i in 0..n {
        for j in 0..n {
            let kij = kmat[i][j];
            if kij == 0.0 {
                continue;
            }
            let sij = s(i, j);
            double_sum += kij * (uv[i] - uv[j]).abs() * pi[i] * pi[j];
            d_k -= kij * sij * div.values[i] * uv[j] * pi[i] * pi[j];
            r_k += 2.0 * kij * sij * leak.r[i] * pi[i] * pi[j];
            ds_dt += 2.0 * kij * sij * rhs.values[i] * pi[i] * pi[j];
        }
    }
    // directed transfers (to, from, a_{to,from})
    let mut transfers = Vec::with_capacity(2 * mesh.n_edges());
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        if aij != 0.0 {
            transfers.push((ed.i, ed.j, aij));
        }
        if aji != 0.0 {
            transfers.push((ed.j, ed.i, aji));
        }
    }
    let mut a_k = 0.0;
    let mut n_k = 0.0;
    for &(to, from, c) in &transfers {
        for j in 0..n {
            // A′: a_{i',i} with i' = to, i = from
            a_k += (kmat[to][j] - kmat[from][j]) * c * (uv[from] - uv[j]).abs() * pi[j];
            // N: a_{i,i'} with i = to, i' = from
            n_k += kmat[to][j] * (s(from, j) - s(to, j)) * c * (uv[j] - uv[from]) * pi[j];
        }
    }
    Ok(KruzkovReport { t: 0.0, double_sum, a_k, d_k, r_k, n_k, ds_dt })
}

/// Σ_{i≠j, |x_i−x_j|≤1} |u_i − u_j|^p π_iπ_j / |x_i − x_j|^{d+sp} for each s.
pub fn fractional_sobolev_multi(volumes: &[f64], u: &[f64], coords: &VirtualCoordinates, s: &[f64], p: f64) -> Result<Vec<f64>> {
    if let Some(&bad) = s.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidParameter(format!("s must lie in (0, 1), got {bad}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be a finite exponent ≥ 1, got {p}")));
    }
    if volumes.len() != u.len() || coords.len() != u.len() {
        return Err(Error::Mismatch("values, volumes and coordinates differ in length".into()));
    }
    let d = coords.dim as f64;
    let exps: Vec<f64> = s.iter().map(|&v| d + v * p).collect();
    Ok(pair_sums(coords, u, 1.0 + 1e-12, s.len(), |i, j, r, acc| {
        if r == 0.0 {
            return;
        }
        let w = 2.0 * (u[i] - u[j]).abs().powf(p) * volumes[i] * volumes[j];
        if w == 0.0 {
            return;
        }
        let lr = r.ln();
        for (a, e) in acc.iter_mut().zip(&exps) {
            *a += w * (-e * lr).exp();
        }
    }))
}

/// Discrete W^{s,p} Gagliardo sum on mesh barycenters.
pub fn fractional_sobolev(mesh: &GeneralMesh, u: &CellValues, s: f64, p: f64) -> Result<f64> {
    let c = VirtualCoordinates::barycenters(mesh);
    Ok(fractional_sobolev_multi(&mesh.volumes, &u.values, &c, &[s], p)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let k = KernelSpec::new(0.1, 2).unwrap();
        assert!((kernel_eval(&k, &[0.0, 0.0]) - 100.0).abs() < 1e-12);
        assert_eq!(kernel_eval(&k, &[2.0, 0.0]), 0.0);
        assert!((kernel_eval(&k, &[0.6, 0.8]) - 1.0 / 1.21).abs() < 1e-12);
        assert!(KernelSpec::new(0.5, 2).is_err());
    }

    #[test]
    fn two_cell_closed_form() {
        let coords = VirtualCoordinates::new(2, vec![0.0, 0.0, 0.5, 0.0]).unwrap();
        let params = SemiNormParams { h0: 0.1, p: 1.0, theta: 0.5, n_h: 1, p_star: None };
        let scan = seminorm_points(&[1.0, 1.0], &[0.0, 1.0], &params, &coords).unwrap();
        let expect = 0.1f64.ln().abs().powf(-0.5) * 2.0 * cutoff(0.5) / 0.6f64.powi(2);
        assert!((scan.value - expect).abs() < 1e-14);
    }

    #[test]
    fn h_grid_endpoints() {
        let g = SemiNormParams::new(0.01, 1.0, 0.5).unwrap().h_grid();
        assert_eq!(g.len(), 24);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[23], 0.5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fractional_two_cells() {
        let coords = VirtualCoordinates::new(1, vec![0.0, 0.3]).unwrap();
        let v = fractional_sobolev_multi(&[1.0, 1.0], &[0.0, 1.0], &coords, &[0.4], 1.0).unwrap();
        assert!((v[0] - 2.0 / 0.3f64.powf(1.4)).abs() < 1e-12);
        assert!(fractional_sobolev_multi(&[1.0], &[1.0], &VirtualCoordinates::new(1, vec![0.0]).unwrap(), &[1.0], 1.0).is_err());
    }
}
