//! Periodic virtual coordinates: the reduced linear system on a pattern, its
//! block structure and bounded zero-mean solutions, admissible families over
//! directions, averaged fields and residues.

use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{cell_quadrature, CellValues, CellVectors, FaceCoeffs, QuadratureSpec};
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::mesh_core::domain::Domain;
use crate::mesh_core::polygon::{build_polygon_mesh, LatticeTags, VertexPool};
use crate::mesh_core::{CellKind, GeneralMesh, PeriodicStructure};
use crate::seminorm::VirtualCoordinates;

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DiffusionMatrix {
    pub fn zeros(n: usize) -> Self {
        DiffusionMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("matrix must be square".into()));
        }
        Ok(DiffusionMatrix { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    fn scale(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
    }

    /// Check membership in M(n): off-diagonals ≤ 0, row and column sums 0.
    pub fn validate(&self, rel_tol: f64) -> Result<()> {
        let tol = rel_tol * self.scale();
        for i in 0..self.n {
            let (mut rs, mut cs) = (0.0, 0.0);
            for j in 0..self.n {
                if i != j && self.get(i, j) > tol {
                    return Err(Error::NotDiffusion(format!("positive off-diagonal entry ({i}, {j})")));
                }
                rs += self.get(i, j);
                cs += self.get(j, i);
            }
            if rs.abs() > tol * self.n as f64 {
                return Err(Error::NotDiffusion(format!("row {i} sums to {rs:e}")));
            }
            if cs.abs() > tol * self.n as f64 {
                return Err(Error::NotDiffusion(format!("column {i} sums to {cs:e}")));
            }
        }
        Ok(())
    }

    /// Matrix triplets `i j value` of the nonzero entries.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = vec![];
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

const MATRIX_TOL: f64 = 1e-10;

/// Relative size below which an entry counts as no coupling.
const COUPLING_TOL: f64 = 1e-13;

/// Irreducible diagonal blocks, as connected components of the symmetrized support
/// (entries below 10⁻¹³ max|M| are treated as zero). Blocks are sorted and ordered
/// by their smallest index.
pub fn block_decompose(m: &DiffusionMatrix) -> Result<Vec<Vec<usize>>> {
    m.validate(MATRIX_TOL)?;
    let n = m.n;
    let thresh = COUPLING_TOL * m.scale();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m.get(i, j).abs() > thresh || m.get(j, i).abs() > thresh {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = vec![];
    let mut root_block = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_block[r] == usize::MAX {
            root_block[r] = blocks.len();
            blocks.push(vec![]);
        }
        blocks[root_block[r]].push(i);
    }
    Ok(blocks)
}

/// Dense LU solve with partial pivoting.
fn lu_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, mx) = (k..n).map(|r| (r, a[r * n + k].abs())).fold((k, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        if mx <= 1e-14 * scale {
            return Err(Error::Singular(format!("pivot {k} vanishes")));
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        for r in (k + 1)..n {
            let f = a[r * n + k] / a[k * n + k];
            if f != 0.0 {
                for c in k..n {
                    a[r * n + c] -= f * a[k * n + c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in (k + 1)..n {
            s -= a[k * n + c] * b[c];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(b)
}

/// Solution of M x = φ with zero mean on every block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedSolution {
    pub x: Vec<f64>,
    pub blocks: Vec<Vec<usize>>,
    /// ‖Mx − φ‖_∞ / max(‖φ‖_∞, tiny).
    pub relative_residual: f64,
}

/// Solve M x = φ block by block with Σ_{I_k} x = 0, via the bordered system
/// [M_k 1; 1ᵀ 0]. Rejects φ whose block sums exceed 10⁻⁹Σ|φ| plus a roundoff
/// allowance of 10⁻¹² max|M| per block element.
pub fn solve_bounded(m: &DiffusionMatrix, phi: &[f64]) -> Result<BoundedSolution> {
    solve_bounded_scaled(m, phi, 0.0)
}

/// As [`solve_bounded`], with `scale` the magnitude of the terms that were summed
/// into φ; block sums up to 10⁻¹² of it are accepted as cancellation roundoff.
pub fn solve_bounded_scaled(m: &DiffusionMatrix, phi: &[f64], scale: f64) -> Result<BoundedSolution> {
    if phi.len() != m.n {
        return Err(Error::Mismatch("right-hand side length differs from matrix size".into()));
    }
    let blocks = block_decompose(m)?;
    let phi_scale = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let m_scale = m.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x = vec![0.0; m.n];
    for (k, blk) in blocks.iter().enumerate() {
        let sum: f64 = blk.iter().map(|&i| phi[i]).sum();
        let abs: f64 = blk.iter().map(|&i| phi[i].abs()).sum();
        if sum.abs() > 1e-9 * abs + 1e-12 * (m_scale * blk.len() as f64 + scale) {
            return Err(Error::Range { block: k, sum });
        }
        let nb = blk.len();
        let sz = nb + 1;
        let mut a = vec![0.0; sz * sz];
        let mut b = vec![0.0; sz];
        for (r, &i) in blk.iter().enumerate() {
            for (c, &j) in blk.iter().enumerate() {
                a[r * sz + c] = m.get(i, j);
            }
            a[r * sz + nb] = 1.0;
            a[nb * sz + r] = 1.0;
            b[r] = phi[i];
        }
        let sol = lu_solve(a, sz, b)?;
        for (r, &i) in blk.iter().enumerate() {
            x[i] = sol[r];
        }
    }
    let res = m.mul(&x).iter().zip(phi).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    Ok(BoundedSolution { x, blocks, relative_residual: res / phi_scale.max(1e-300) })
}

/// The bound D_{n−1}‖φ‖_∞ of the discrete maximum principle for entries in [η₀, η₁].
pub fn maximum_principle_bound(n: usize, eta0: f64, eta1: f64, phi_inf: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let k = (n - 1) as i32;
    if n == 2 {
        return k as f64 / eta0 * phi_inf;
    }
    let q = (n - 2) as f64;
    ((1.0 + q * eta1 / eta0).powi(k) - 1.0) / (q * eta1) * phi_inf
}

/// Smallest C₀ with |Σ_{I'}φ| ≤ C₀ Σ_{j∈I', i∉I'}(|M_ij| + |M_ji|) over all subsets I'
/// (brute force, n ≤ 20). Subsets with no boundary weight are skipped.
pub fn range_constant(m: &DiffusionMatrix, phi: &[f64]) -> Result<f64> {
    if m.n > 20 {
        return Err(Error::InvalidParameter("brute-force range constant limited to n ≤ 20".into()));
    }
    let n = m.n;
    let mut c0 = 0.0f64;
    for mask in 1u32..(1u32 << n) {
        let inside = |i: usize| mask >> i & 1 == 1;
        let s: f64 = (0..n).filter(|&i| inside(i)).map(|i| phi[i]).sum();
        let mut w = 0.0;
        for j in (0..n).filter(|&j| inside(j)) {
            for i in (0..n).filter(|&i| !inside(i)) {
                w += m.get(i, j).abs() + m.get(j, i).abs();
            }
        }
        if w > 0.0 {
            c0 = c0.max(s.abs() / w);
        }
    }
    Ok(c0)
}

/// Random member of M(n) built from edge-disjoint directed cycles, each with one
/// weight drawn from [w_min, w_max]; `groups` splits the indices into decoupled sets.
pub fn random_diffusion_matrix<R: Rng>(groups: &[Vec<usize>], n: usize, w: (f64, f64), rng: &mut R) -> DiffusionMatrix {
    let mut m = DiffusionMatrix::zeros(n);
    let mut used = vec![false; n * n];
    for g in groups {
        if g.len() < 2 {
            continue;
        }
        // a Hamiltonian cycle makes the group irreducible, then a few extra cycles
        let mut cycles: Vec<Vec<usize>> = vec![];
        let mut order = g.clone();
        for k in (1..order.len()).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        cycles.push(order);
        for _ in 0..rng.gen_range(0..=2) {
            let len = rng.gen_range(2..=g.len());
            let mut c = g.clone();
            for k in (1..c.len()).rev() {
                c.swap(k, rng.gen_range(0..=k));
            }
            c.truncate(len);
            cycles.push(c);
        }
        for c in cycles {
            let steps: Vec<(usize, usize)> = (0..c.len()).map(|k| (c[k], c[(k + 1) % c.len()])).collect();
            if steps.iter().any(|&(a, b)| used[a * n + b] || used[b * n + a]) {
                continue;
            }
            let wt = rng.gen_range(w.0..=w.1);
            for (a, b) in steps {
                used[a * n + b] = true;
                used[b * n + a] = true;
                // transfer a → b: M_{ba} off-diagonal, diagonal of a
                m.set(b, a, m.get(b, a) - wt);
                m.set(a, a, m.get(a, a) + wt);
            }
        }
    }
    m
}

/// Faces of every pattern cell inside the infinite periodic tiling.
#[derive(Clone, Debug)]
struct PatternFace {
    neighbour: usize,
    shift: [i64; 2],
    /// Unit normal pointing out of the pattern cell.
    normal: Vec2,
    area: f64,
}

#[derive(Clone, Debug)]
struct PatternGeometry {
    faces: Vec<Vec<PatternFace>>,
    volumes: Vec<f64>,
    barycenters: Vec<Vec2>,
}

fn pattern_geometry(tags: &LatticeTags) -> Result<PatternGeometry> {
    let np = tags.pattern.len();
    for reach in 2..=5i64 {
        let tol = 1e-9 * geom::norm(tags.lattice[0]).min(geom::norm(tags.lattice[1]));
        let mut pool = VertexPool::new(tol);
        let mut cells = vec![];
        let mut sig = vec![];
        for m1 in -reach..=reach {
            for m0 in -reach..=reach {
                let s = tags.translate([m0, m1]);
                for (p, poly) in tags.pattern.iter().enumerate() {
                    cells.push(poly.iter().map(|v| pool.insert(geom::add(*v, s))).collect::<Vec<_>>());
                    sig.push(([m0, m1], p));
                }
            }
        }
        let (lo, hi) = geom::bbox(&pool.vertices);
        let patch = build_polygon_mesh(pool.vertices, cells, Domain::rect(lo, hi))?;
        let centre: Vec<usize> = (0..np).map(|p| sig.iter().position(|&s| s == ([0, 0], p)).unwrap()).collect();
        let mut faces = vec![vec![]; np];
        let mut complete = true;
        for (p, &c) in centre.iter().enumerate() {
            let poly = patch.polygon(c);
            let perimeter: f64 = (0..poly.len()).map(|k| geom::dist(poly[k], poly[(k + 1) % poly.len()])).sum();
            let mut covered = 0.0;
            for &f in &patch.cell_faces[c] {
                let l = patch.other(f, c);
                let face = &patch.faces[f];
                covered += face.area;
                faces[p].push(PatternFace {
                    neighbour: sig[l].1,
                    shift: sig[l].0,
                    normal: patch.normal_into(f, l),
                    area: face.area,
                });
            }
            if (covered - perimeter).abs() > 1e-9 * perimeter {
                complete = false;
            }
        }
        if complete {
            return Ok(PatternGeometry {
                faces,
                volumes: centre.iter().map(|&c| patch.volumes[c]).collect(),
                barycenters: centre.iter().map(|&c| patch.barycenters[c]).collect(),
            });
        }
    }
    Err(Error::Periodicity("pattern neighbourhood could not be closed".into()))
}

/// Reduced periodic system for one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicAssembly {
    pub direction: Vec2,
    /// A_{ij} = Σ_m a_{[m](i), j}.
    pub a: DiffusionMatrix,
    /// Φ_ii = Σ_l A_{li}.
    pub phi_diag: Vec<f64>,
    /// φ_i = Σ_j Σ_m a_{[m](j),i}[m]L − b_c π_i.
    pub rhs: Vec<Vec2>,
    pub volumes: Vec<f64>,
    pub barycenters: Vec<Vec2>,
    /// Φ − Aᵀ.
    pub matrix: DiffusionMatrix,
    /// Row defect moved into the diagonal (zero up to rounding).
    pub row_defect: f64,
}

impl PeriodicAssembly {
    /// φ − M x̄ with x̄ the pattern barycenters: π times the barycenter residue.
    pub fn displacement_rhs(&self) -> Vec<Vec2> {
        let n = self.matrix.n;
        (0..n)
            .map(|i| {
                let mut v = self.rhs[i];
                for j in 0..n {
                    v = geom::sub(v, geom::scale(self.barycenters[j], self.matrix.get(i, j)));
                }
                v
            })
            .collect()
    }

    /// Magnitude of the terms summed into [`Self::displacement_rhs`].
    pub fn rhs_scale(&self) -> f64 {
        let n = self.matrix.n;
        (0..n)
            .map(|i| {
                let mut v = geom::norm(self.direction) * self.volumes[i] + geom::norm(self.rhs[i]);
                for j in 0..n {
                    v += self.matrix.get(i, j).abs() * geom::norm(self.barycenters[j]);
                }
                v
            })
            .sum()
    }

    /// Debug dump: `i,j,value` triplets of Φ − Aᵀ.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,value")?;
        for (i, j, v) in self.matrix.triplets() {
            writeln!(w, "{i},{j},{v:e}")?;
        }
        Ok(())
    }
}

fn lattice_tags(mesh: &GeneralMesh) -> Result<&LatticeTags> {
    mesh.polygon()
        .and_then(|p| p.tags.as_ref())
        .ok_or_else(|| Error::Periodicity("virtual coordinates need a lattice-tagged polygon mesh".into()))
}

fn unit_direction(b: Vec2) -> Result<Vec2> {
    let nb = geom::norm(b);
    if !(nb > 0.0) || !nb.is_finite() {
        return Err(Error::InvalidParameter("direction must be a nonzero finite vector".into()));
    }
    if (nb - 1.0).abs() > 1e-12 {
        log::warn!("direction {b:?} is not a unit vector; normalising");
    }
    Ok(geom::scale(b, 1.0 / nb))
}

fn assemble_from_geometry(geo: &PatternGeometry, lattice: &[Vec2; 2], b: Vec2) -> PeriodicAssembly {
    let n = geo.volumes.len();
    let mut a = DiffusionMatrix::zeros(n);
    let mut phi_diag = vec![0.0; n];
    let mut rhs = vec![[0.0, 0.0]; n];
    for i in 0..n {
        for f in &geo.faces[i] {
            let c = geom::dot(b, f.normal).max(0.0) * f.area;
            if c == 0.0 {
                continue;
            }
            a.set(f.neighbour, i, a.get(f.neighbour, i) + c);
            phi_diag[i] += c;
            let shift = geom::add(geom::scale(lattice[0], f.shift[0] as f64), geom::scale(lattice[1], f.shift[1] as f64));
            rhs[i] = geom::add(rhs[i], geom::scale(shift, c));
        }
        rhs[i] = geom::sub(rhs[i], geom::scale(b, geo.volumes[i]));
    }
    let mut matrix = DiffusionMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { phi_diag[i] - a.get(j, i) } else { -a.get(j, i) };
            matrix.set(i, j, v);
        }
    }
    let mut row_defect = 0.0f64;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| matrix.get(i, j)).sum();
        row_defect = row_defect.max(s.abs());
        matrix.set(i, i, matrix.get(i, i) - s);
    }
    if row_defect > 0.0 {
        log::debug!("row defect {row_defect:e} moved into the diagonal");
    }
    PeriodicAssembly {
        direction: b,
        a,
        phi_diag,
        rhs,
        volumes: geo.volumes.clone(),
        barycenters: geo.barycenters.clone(),
        matrix,
        row_defect,
    }
}

/// Assemble (Φ − Aᵀ)x̂ = φ on the pattern for the constant field b ≡ b_c, with
/// exact periodic coefficients computed from one period.
pub fn assemble_periodic_system(mesh: &GeneralMesh, ps: &PeriodicStructure, direction: Vec2) -> Result<PeriodicAssembly> {
    let tags = lattice_tags(mesh)?;
    if tags.pattern.len() != ps.pattern_size() {
        return Err(Error::Periodicity("pattern size differs from the mesh tags".into()));
    }
    let b = unit_direction(direction)?;
    let geo = pattern_geometry(tags)?;
    Ok(assemble_from_geometry(&geo, &ps.lattice, b))
}

/// Exact coefficients (b·N)⁺|S| of a constant field on a polygon-based mesh, zero off E_Ω°.
pub fn constant_field_coeffs(mesh: &GeneralMesh, b: Vec2) -> Result<FaceCoeffs> {
    let CellKind::Polygon { poly, .. } = &mesh.kind else {
        return Err(Error::Mismatch("exact constant-field coefficients need polygon faces".into()));
    };
    let values = mesh
        .edges
        .iter()
        .enumerate()
        .map(|(e, ed)| {
            if !mesh.edge_interior[e] {
                return [0.0, 0.0];
            }
            let f = &poly.faces[ed.face];
            let c = geom::dot(b, f.normal);
            [c.max(0.0) * f.area, (-c).max(0.0) * f.area]
        })
        .collect();
    Ok(FaceCoeffs { values, time: None })
}

/// Residue r_i = (1/π_i)Σ_{i'}(x̃_{i'} − x̃_i)a_{i',i} − b̃_i on V_Ω° with its norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidueReport {
    pub r: CellVectors,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn residue_field(mesh: &GeneralMesh, a: &FaceCoeffs, b_tilde: &CellVectors, x: &VirtualCoordinates) -> Result<ResidueReport> {
    let n = mesh.n_cells();
    if a.values.len() != mesh.n_edges() || b_tilde.values.len() != n || x.len() != n || x.dim != 2 {
        return Err(Error::Mismatch("residue inputs do not match the mesh".into()));
    }
    let mut s = vec![[0.0, 0.0]; n];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        let d = geom::sub(x.point2(ed.j), x.point2(ed.i));
        // into j from i contributes to i's outgoing sum
        s[ed.i] = geom::add(s[ed.i], geom::scale(d, aji));
        s[ed.j] = geom::sub(s[ed.j], geom::scale(d, aij));
    }
    let mut r = vec![[0.0, 0.0]; n];
    for i in 0..n {
        if mesh.interior[i] {
            r[i] = geom::sub(geom::scale(s[i], 1.0 / mesh.volumes[i]), b_tilde.values[i]);
        }
    }
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut linf = 0.0f64;
    for i in 0..n {
        let v = geom::norm(r[i]);
        l1 += v * mesh.volumes[i];
        l2 += v * v * mesh.volumes[i];
        linf = linf.max(v);
    }
    Ok(ResidueReport { r: CellValues { values: r }, l1, l2: l2.sqrt(), linf })
}

/// Direction-indexed virtual coordinates extended periodically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibleFamily {
    pub directions: Vec<Vec2>,
    /// Displacement y_p(b_c) of every pattern element, per direction.
    pub displacements: Vec<Vec<Vec2>>,
    pub barycenters: Vec<Vec2>,
    pub pattern_of: Vec<usize>,
    pub in_domain: Vec<bool>,
    /// max over directions and edges of |x̂_i − x̂_j|.
    pub m_gamma: f64,
    /// max over directions and cells of |x̂_i − x_i|.
    pub m_beta: f64,
    /// Maximal residue r̂_max per cell over the direction grid.
    pub r_max: Vec<f64>,
    /// (L¹, L², L^∞) norms of r̂_max.
    pub m_xi: [f64; 3],
    pub delta_x: f64,
}

impl AdmissibleFamily {
    /// Index of the grid direction closest to b/|b|.
    pub fn snap(&self, b: Vec2) -> Result<usize> {
        let u = unit_direction(b)?;
        Ok((0..self.directions.len())
            .max_by(|&a, &c| geom::dot(self.directions[a], u).total_cmp(&geom::dot(self.directions[c], u)))
            .unwrap())
    }

    pub fn coordinates_at(&self, k: usize) -> VirtualCoordinates {
        let pts: Vec<Vec2> = (0..self.barycenters.len())
            .map(|i| {
                if self.in_domain[i] {
                    geom::add(self.barycenters[i], self.displacements[k][self.pattern_of[i]])
                } else {
                    self.barycenters[i]
                }
            })
            .collect();
        VirtualCoordinates::from_points(&pts)
    }

    /// x̂(b) by normalised lookup, so x̂(λb) = x̂(b) for λ > 0.
    pub fn coordinates(&self, b: Vec2) -> Result<VirtualCoordinates> {
        Ok(self.coordinates_at(self.snap(b)?))
    }

    pub fn m_beta_relative(&self) -> f64 {
        self.m_beta / self.delta_x
    }

    pub fn m_gamma_relative(&self) -> f64 {
        self.m_gamma / self.delta_x
    }

    /// CSV with columns direction, cell_id, x, y, residue_norm.
    pub fn write_csv<W: Write>(&self, mesh: &GeneralMesh, mut w: W) -> Result<()> {
        writeln!(w, "direction,cell_id,x,y,residue_norm")?;
        for (k, d) in self.directions.iter().enumerate() {
            let c = self.coordinates_at(k);
            let a = constant_field_coeffs(mesh, *d)?;
            let bt = constant_projection(mesh, *d);
            let r = residue_field(mesh, &a, &bt, &c)?;
            for i in 0..self.barycenters.len() {
                let p = c.point2(i);
                writeln!(w, "{k},{i},{:e},{:e},{:e}", p[0], p[1], geom::norm(r.r.values[i]))?;
            }
        }
        Ok(())
    }
}

/// P_C of a constant field: b on V_Ω°, 0 elsewhere.
pub fn constant_projection(mesh: &GeneralMesh, b: Vec2) -> CellVectors {
    CellValues { values: mesh.interior.iter().map(|&int| if int { b } else { [0.0, 0.0] }).collect() }
}

/// Directions 2πk/K on the unit circle.
pub fn direction_grid(count: usize) -> Vec<Vec2> {
    (0..count)
        .map(|k| {
            let t = TAU * k as f64 / count as f64;
            [t.cos(), t.sin()]
        })
        .collect()
}

/// Solve the periodic system for every grid direction and measure drifts and residues.
pub fn build_admissible_family(mesh: &GeneralMesh, ps: &PeriodicStructure, direction_count: usize) -> Result<AdmissibleFamily> {
    if direction_count == 0 {
        return Err(Error::InvalidParameter("direction count must be positive".into()));
    }
    let tags = lattice_tags(mesh)?;
    let geo = pattern_geometry(tags)?;
    let directions = direction_grid(direction_count);
    let displacements: Vec<Vec<Vec2>> = directions
        .par_iter()
        .enumerate()
        .map(|(k, &b)| {
            let asm = assemble_from_geometry(&geo, &ps.lattice, b);
            let rhs = asm.displacement_rhs();
            let scale = asm.rhs_scale();
            let mut y = vec![[0.0, 0.0]; rhs.len()];
            for c in 0..2 {
                let comp: Vec<f64> = rhs.iter().map(|v| v[c]).collect();
                let sol = solve_bounded_scaled(&asm.matrix, &comp, scale).map_err(|e| Error::Direction(k, e.to_string()))?;
                for (yi, s) in y.iter_mut().zip(sol.x) {
                    yi[c] = s;
                }
            }
            Ok(y)
        })
        .collect::<Result<_>>()?;
    let pattern_of: Vec<usize> = ps.sigma.iter().map(|s| s.1).collect();
    let mut fam = AdmissibleFamily {
        directions,
        displacements,
        barycenters: mesh.barycenters.clone(),
        pattern_of,
        in_domain: mesh.in_domain.clone(),
        m_gamma: 0.0,
        m_beta: 0.0,
        r_max: vec![0.0; mesh.n_cells()],
        m_xi: [0.0; 3],
        delta_x: mesh.delta_x,
    };
    let per_dir: Vec<(f64, f64, Vec<f64>)> = (0..fam.directions.len())
        .into_par_iter()
        .map(|k| {
            let c = fam.coordinates_at(k);
            let mut beta = 0.0f64;
            for i in 0..c.len() {
                beta = beta.max(geom::dist(c.point2(i), fam.barycenters[i]));
            }
            let mut gamma = 0.0f64;
            for ed in &mesh.edges {
                if mesh.in_domain[ed.i] && mesh.in_domain[ed.j] {
                    gamma = gamma.max(c.dist(ed.i, ed.j));
                }
            }
            let b = fam.directions[k];
            let a = constant_field_coeffs(mesh, b)?;
            let r = residue_field(mesh, &a, &constant_projection(mesh, b), &c)?;
            Ok((beta, gamma, r.r.values.iter().map(|v| geom::norm(*v)).collect()))
        })
        .collect::<Result<_>>()?;
    for (beta, gamma, r) in per_dir {
        fam.m_beta = fam.m_beta.max(beta);
        fam.m_gamma = fam.m_gamma.max(gamma);
        for (m, v) in fam.r_max.iter_mut().zip(r) {
            *m = m.max(v);
        }
    }
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut li = 0.0f64;
    for (v, p) in fam.r_max.iter().zip(&mesh.volumes) {
        l1 += v * p;
        l2 += v * v * p;
        li = li.max(*v);
    }
    fam.m_xi = [l1, l2.sqrt(), li];
    Ok(fam)
}

/// Slab-and-region averages of a velocity field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AveragedField {
    pub t_end: f64,
    pub tau: f64,
    pub eta: f64,
    pub n_slabs: usize,
    /// Lower-left corner of the box grid.
    pub origin: Vec2,
    /// Box index of every region k.
    pub boxes: Vec<[i64; 2]>,
    /// Region of every cell (by barycenter), so ψ_k = Σ_{i∈V_k} χ_i partitions unity.
    pub cell_region: Vec<usize>,
    /// b̄^{l,k}: averages[l][k].
    pub averages: Vec<Vec<Vec2>>,
    /// ∂V_k: cells of V_k with a neighbour outside V_k.
    pub boundary_sets: Vec<Vec<usize>>,
    /// V_k \ ∂V_k.
    pub inner_sets: Vec<Vec<usize>>,
}

impl AveragedField {
    pub fn slab_of(&self, t: f64) -> usize {
        ((t / self.tau).floor().max(0.0) as usize).min(self.n_slabs - 1)
    }

    /// b̄ seen by cell i at time t.
    pub fn value(&self, t: f64, i: usize) -> Vec2 {
        self.averages[self.slab_of(t)][self.cell_region[i]]
    }
}

/// Average b over time slabs of length τ and η-boxes.
pub fn average_field<F>(b: F, mesh: &GeneralMesh, t_end: f64, tau: f64, eta: f64, spec: &QuadratureSpec) -> Result<AveragedField>
where
    F: Fn(f64, Vec2) -> Vec2 + Sync,
{
    if !(eta >= 8.0 * mesh.delta_x * (1.0 - 1e-12)) {
        return Err(Error::InvalidParameter(format!("η = {eta} is below 8δx = {}", 8.0 * mesh.delta_x)));
    }
    if !(tau > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter("τ and T must be positive".into()));
    }
    let slabs = t_end / tau;
    let n_slabs = slabs.round() as usize;
    if n_slabs == 0 || (slabs - n_slabs as f64).abs() > 1e-9 * slabs {
        return Err(Error::InvalidParameter(format!("τ = {tau} does not divide T = {t_end}")));
    }
    let (origin, _) = mesh.domain.bbox();
    let key = |x: Vec2| [((x[0] - origin[0]) / eta).floor() as i64, ((x[1] - origin[1]) / eta).floor() as i64];
    let mut boxes: Vec<[i64; 2]> = vec![];
    let mut index = std::collections::HashMap::new();
    let cell_region: Vec<usize> = mesh
        .barycenters
        .iter()
        .map(|&x| {
            let k = key(x);
            *index.entry(k).or_insert_with(|| {
                boxes.push(k);
                boxes.len() - 1
            })
        })
        .collect();
    let nk = boxes.len();
    let (tg, tw) = geom::gauss_legendre(spec.face_points);
    let quads: Vec<Vec<(Vec2, f64)>> = (0..mesh.n_cells()).into_par_iter().map(|i| cell_quadrature(mesh, i, spec)).collect();
    let mut mass = vec![0.0; nk];
    for i in 0..mesh.n_cells() {
        mass[cell_region[i]] += mesh.volumes[i];
    }
    let averages: Vec<Vec<Vec2>> = (0..n_slabs)
        .into_par_iter()
        .map(|l| {
            let (t0, t1) = (l as f64 * tau, (l + 1) as f64 * tau);
            let mut acc = vec![[0.0, 0.0]; nk];
            for i in 0..mesh.n_cells() {
                let k = cell_region[i];
                for (x, w) in &quads[i] {
                    for (g, gw) in tg.iter().zip(&tw) {
                        let t = t0 + 0.5 * (g + 1.0) * (t1 - t0);
                        acc[k] = geom::add(acc[k], geom::scale(b(t, *x), w * 0.5 * gw));
                    }
                }
            }
            acc.iter().zip(&mass).map(|(v, m)| if *m > 0.0 { geom::scale(*v, 1.0 / m) } else { [0.0, 0.0] }).collect()
        })
        .collect();
    let mut boundary_sets = vec![vec![]; nk];
    let mut inner_sets = vec![vec![]; nk];
    for i in 0..mesh.n_cells() {
        let k = cell_region[i];
        let on_boundary = mesh.cell_edges[i].iter().any(|&e| cell_region[mesh.edges[e].other(i)] != k);
        if on_boundary {
            boundary_sets[k].push(i);
        } else {
            inner_sets[k].push(i);
        }
    }
    Ok(AveragedField { t_end, tau, eta, n_slabs, origin, boxes, cell_region, averages, boundary_sets, inner_sets })
}

/// Space and time scales with clamping diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionParameters {
    pub eta: f64,
    pub tau: f64,
    pub eta_clamped: bool,
    pub tau_clamped: bool,
}

/// η = δx^{(1/p−1/q)/(1+(1/p−1/q))}, τ = (δx M_β/M_γ)^{1/(1+s)}, clamped to η ≥ 8δx and τ ≤ T.
#[allow(clippy::too_many_arguments)]
pub fn partition_parameters(dx: f64, s: f64, p: f64, q: f64, m_beta: f64, m_gamma: f64, t_end: f64, extent: f64) -> Result<PartitionParameters> {
    if !(dx > 0.0) || !(s > 0.0 && s <= 1.0) || !(p >= 1.0) || !(q > p) {
        return Err(Error::InvalidParameter("need δx > 0, 0 < s ≤ 1 and 1 ≤ p < q ≤ ∞".into()));
    }
    if !(m_beta >= 0.0 && m_gamma > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter("need M_β ≥ 0, M_γ > 0 and T > 0".into()));
    }
    let g = 1.0 / p - 1.0 / q;
    let mut eta = dx.powf(g / (1.0 + g));
    let mut tau = (dx * m_beta / m_gamma).powf(1.0 / (1.0 + s));
    let eta_clamped = eta < 8.0 * dx;
    if eta_clamped {
        eta = 8.0 * dx;
    }
    let tau_clamped = tau > t_end;
    if tau_clamped {
        tau = t_end;
    }
    if eta > extent || !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("no feasible partition: η = {eta}, τ = {tau}")));
    }
    Ok(PartitionParameters { eta, tau, eta_clamped, tau_clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_solve() {
        let m = DiffusionMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let s = solve_bounded(&m, &[1.0, -1.0]).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-15 && (s.x[1] + 0.5).abs() < 1e-15);
        assert_eq!(block_decompose(&m).unwrap().len(), 1);
        assert!(matches!(solve_bounded(&m, &[1.0, 0.0]), Err(Error::Range { block: 0, .. })));
        assert_eq!(solve_bounded(&m, &[0.0, 0.0]).unwrap().x, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_matrix_singletons() {
        assert_eq!(block_decompose(&DiffusionMatrix::zeros(3)).unwrap(), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn rejects_non_diffusion() {
        let m = DiffusionMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(matches!(block_decompose(&m), Err(Error::NotDiffusion(_))));
    }

    #[test]
    fn partition_plug_in() {
        let pp = partition_parameters(2f64.powi(-10), 1.0, 1.0, f64::INFINITY, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((pp.eta - 2f64.powi(-5)).abs() < 1e-15);
        assert!((pp.tau - 2f64.powi(-5)).abs() < 1e-15);
        let pp = partition_parameters(1e-4, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((pp.eta - 10f64.powf(-4.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn bound_limits() {
        assert_eq!(maximum_principle_bound(2, 0.5, 1.0, 1.0), 2.0);
        let b3 = maximum_principle_bound(3, 0.1, 1.0, 1.0);
        assert!((b3 - ((1.0f64 + 10.0).powi(2) - 1.0)).abs() < 1e-12);
    }

    fn tagged(kind: &str) -> GeneralMesh {
        use crate::mesh_core::{build_alternating_mesh, build_cartesian_mesh, sharp_polygon_mesh};
        let pm = match kind {
            "cartesian" => build_cartesian_mesh(8, 8, Domain::unit_square()).unwrap(),
            _ => build_alternating_mesh(1.0 / 8.0, Domain::unit_square()).unwrap(),
        };
        sharp_polygon_mesh(&pm, 1.0).unwrap()
    }

    #[test]
    fn cartesian_pattern_is_trivial() {
        let m = tagged("cartesian");
        let ps = crate::mesh_core::periodic_from_tags(&m).unwrap();
        let asm = assemble_periodic_system(&m, &ps, [0.6, 0.8]).unwrap();
        assert_eq!(asm.matrix.n, 1);
        assert!(asm.matrix.get(0, 0).abs() < 1e-15);
        assert!(geom::norm(asm.rhs[0]) < 1e-15);
    }

    #[test]
    fn alternating_family_has_zero_residue() {
        let m = tagged("alternating");
        let ps = crate::mesh_core::periodic_from_tags(&m).unwrap();
        let fam = build_admissible_family(&m, &ps, 16).unwrap();
        let worst = (0..m.n_cells()).filter(|&i| m.interior[i]).fold(0.0f64, |a, i| a.max(fam.r_max[i]));
        assert!(worst < 1e-10, "residue {worst:e}");
        // barycentric coordinates do not solve the cell problem on this mesh
        let b = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        let bary = VirtualCoordinates::barycenters(&m);
        let r = residue_field(&m, &constant_field_coeffs(&m, b).unwrap(), &constant_projection(&m, b), &bary).unwrap();
        assert!(r.linf > 1e-3);
        assert!(fam.m_beta > 0.0 && fam.m_beta < m.delta_x);
        assert_eq!(fam.snap([2.0, 0.0]).unwrap(), 0);
    }
}
