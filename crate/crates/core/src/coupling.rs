//! P1 finite-element Poisson solve coupled to the upwind scheme on the same hat mesh.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{discrete_divergence, project_to_face_piecewise_constant, CellValues, FaceCoeffs};
use crate::error::{Error, Result};
use crate::geom::{self, TriangleRule, Vec2};
use crate::mesh_core::{GeneralMesh, Triangulation};
use crate::upwind::{assemble_rhs, cfl_limit, Method, SchemeState, StepperSpec};

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Sum duplicate triplets; the result is independent of triplet order.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = vec![];
        let mut vals: Vec<f64> = vec![];
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }
}

/// Result of a preconditioned conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG for a symmetric positive definite matrix.
pub fn conjugate_gradient(a: &Csr, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<CgResult> {
    let n = a.n;
    let diag: Vec<f64> = (0..n).map(|r| a.get(r, r)).collect();
    if let Some(r) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Singular(format!("stiffness diagonal {r} is not positive")));
    }
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        return Ok(CgResult { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 1..=max_iter {
        let ap = a.mul(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Singular("conjugate gradient breakdown".into()));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= rel_tol * bn {
            return Ok(CgResult { x, iterations: it, relative_residual: rn / bn });
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::Singular(format!("conjugate gradient did not converge in {max_iter} iterations")))
}

/// Hat basis on the advection triangulation with homogeneous Dirichlet boundary nodes.
#[derive(Clone, Debug)]
pub struct P1Space {
    pub tri: Triangulation,
    /// Index among the free (non-Dirichlet) nodes.
    pub free: Vec<Option<usize>>,
    pub free_nodes: Vec<usize>,
    /// Full stiffness ∫∇χ_a·∇χ_b.
    pub stiffness: Csr,
    /// Full consistent mass ∫χ_aχ_b.
    pub mass: Csr,
    /// Stiffness restricted to free nodes.
    pub reduced: Csr,
}

impl P1Space {
    /// Share the hat functions of `mesh`, so the advection cells are FEM basis functions.
    pub fn new(mesh: &GeneralMesh) -> Result<Self> {
        let tri = mesh
            .triangulation()
            .ok_or_else(|| Error::Mismatch("the coupled system needs a hat-function mesh".into()))?
            .clone();
        let n = tri.nodes.len();
        let mut free = vec![None; n];
        let mut free_nodes = vec![];
        for v in 0..n {
            if !tri.boundary[v] {
                free[v] = Some(free_nodes.len());
                free_nodes.push(v);
            }
        }
        let local: Vec<Vec<(usize, usize, f64, f64)>> = (0..tri.triangles.len())
            .into_par_iter()
            .map(|t| {
                let a = tri.areas[t];
                if !(a > 0.0) {
                    return Err(Error::DegenerateCell(t, a));
                }
                let g = tri.grads[t];
                let tr = tri.triangles[t];
                let mut out = Vec::with_capacity(9);
                for p in 0..3 {
                    for q in 0..3 {
                        let k = a * geom::dot(g[p], g[q]);
                        let m = if p == q { a / 6.0 } else { a / 12.0 };
                        out.push((tr[p], tr[q], k, m));
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let flat: Vec<(usize, usize, f64, f64)> = local.into_iter().flatten().collect();
        let stiffness = Csr::from_triplets(n, flat.iter().map(|&(a, b, k, _)| (a, b, k)).collect());
        let mass = Csr::from_triplets(n, flat.iter().map(|&(a, b, _, m)| (a, b, m)).collect());
        let reduced = Csr::from_triplets(
            free_nodes.len(),
            flat.iter().filter_map(|&(a, b, k, _)| Some((free[a]?, free[b]?, k))).collect(),
        );
        Ok(P1Space { tri, free, free_nodes, stiffness, mass, reduced })
    }

    pub fn n_nodes(&self) -> usize {
        self.tri.nodes.len()
    }
}

/// P1 potential with its per-triangle gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub phi: Vec<f64>,
    pub grad: Vec<Vec2>,
    pub iterations: usize,
    /// max over free nodes a of |∫∇χ_a·∇φ − ∫χ_a g^χ| / max_a |∫χ_a g^χ|.
    pub variational_residual: f64,
}

impl Potential {
    pub fn range(&self) -> (f64, f64) {
        self.phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Solve ∫∇v·∇φ = ∫v g^χ for every free hat v, with g^χ = Σ_i g_iχ_i and φ = 0 on the boundary.
pub fn fem_poisson_solve(space: &P1Space, g: &[f64]) -> Result<Potential> {
    let n = space.n_nodes();
    if g.len() != n {
        return Err(Error::Mismatch("source coefficients differ from the node count".into()));
    }
    let load = space.mass.mul(g);
    let rhs: Vec<f64> = space.free_nodes.iter().map(|&v| load[v]).collect();
    let sol = conjugate_gradient(&space.reduced, &rhs, 1e-14, 10 * n.max(100))?;
    let mut phi = vec![0.0; n];
    for (k, &v) in space.free_nodes.iter().enumerate() {
        phi[v] = sol.x[k];
    }
    let grad = space
        .tri
        .triangles
        .iter()
        .zip(&space.tri.grads)
        .map(|(tr, gr)| (0..3).fold([0.0, 0.0], |acc, k| geom::add(acc, geom::scale(gr[k], phi[tr[k]]))))
        .collect();
    let kphi = space.stiffness.mul(&phi);
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = space.free_nodes.iter().fold(0.0f64, |m, &v| m.max((kphi[v] - load[v]).abs()));
    let variational_residual = if scale > 0.0 { worst / scale } else { worst };
    Ok(Potential { phi, grad, iterations: sol.iterations, variational_residual })
}

/// Nodal and H¹-seminorm errors of a P1 potential against an exact solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemError {
    pub nodal_max: f64,
    pub h1: f64,
    pub h: f64,
}

pub fn fem_error<U, G>(space: &P1Space, phi: &Potential, exact: U, exact_grad: G) -> FemError
where
    U: Fn(Vec2) -> f64,
    G: Fn(Vec2) -> Vec2,
{
    let tri = &space.tri;
    let nodal_max = tri.nodes.iter().zip(&phi.phi).fold(0.0f64, |m, (x, v)| m.max((exact(*x) - v).abs()));
    let rule = TriangleRule::collapsed(4);
    let mut h1 = 0.0;
    for (t, tr) in tri.triangles.iter().enumerate() {
        let p = tr.map(|v| tri.nodes[v]);
        for (x, w) in rule.map(p[0], p[1], p[2]) {
            let d = geom::sub(exact_grad(x), phi.grad[t]);
            h1 += w * geom::dot(d, d);
        }
    }
    FemError { nodal_max, h1: h1.sqrt(), h: tri.max_edge() }
}

/// Check of D_i = −Σ_j A_{ij} g_j with A_{ij} = (1/π_i)∫χ_jχ_i on interior cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    /// max_i |D_i + Σ_j A_{ij}g_j| / max(max|g|, tiny).
    pub max_error: f64,
    /// max_i |Σ_j A_{ij} − 1|.
    pub row_sum_defect: f64,
    pub min_entry: f64,
    pub div_sup: f64,
    pub div_inf: f64,
}

pub fn divergence_identity(mesh: &GeneralMesh, space: &P1Space, a: &FaceCoeffs, g: &[f64]) -> Result<DivergenceCheck> {
    let d = discrete_divergence(mesh, a)?;
    let gs = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut out = DivergenceCheck {
        max_error: 0.0,
        row_sum_defect: 0.0,
        min_entry: f64::INFINITY,
        div_sup: f64::NEG_INFINITY,
        div_inf: f64::INFINITY,
    };
    for i in 0..mesh.n_cells() {
        if !mesh.interior[i] || space.free[i].is_none() {
            continue;
        }
        let inv = 1.0 / mesh.volumes[i];
        let mut s = 0.0;
        let mut rs = 0.0;
        for (j, m) in space.mass.row(i) {
            s += inv * m * g[j];
            rs += inv * m;
            out.min_entry = out.min_entry.min(inv * m);
        }
        out.max_error = out.max_error.max((d.values[i] + s).abs() / gs);
        out.row_sum_defect = out.row_sum_defect.max((rs - 1.0).abs());
        out.div_sup = out.div_sup.max(d.values[i]);
        out.div_inf = out.div_inf.min(d.values[i]);
    }
    Ok(out)
}

/// How the potential follows the density within a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    /// Solve once at the start of every step.
    #[default]
    PerStep,
    /// Solve at every Runge-Kutta stage.
    StageExact,
}

/// A nonlinearity g with its declared Lipschitz constant.
pub struct Nonlinearity<'a> {
    pub g: &'a (dyn Fn(f64) -> f64 + Sync),
    pub lipschitz: f64,
}

impl Nonlinearity<'_> {
    /// Require g(0) = 0 and spot-check Lipschitz bound and concavity on [0, u_max];
    /// returns the number of concavity violations (logged as warnings).
    pub fn check(&self, u_max: f64) -> Result<usize> {
        if (self.g)(0.0) != 0.0 {
            return Err(Error::InvalidParameter("the nonlinearity must vanish at 0".into()));
        }
        let n = 64;
        let xs: Vec<f64> = (0..=n).map(|k| u_max * k as f64 / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (self.g)(x)).collect();
        let mut bad = 0;
        for k in 1..n {
            let slope = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
            if slope.abs() > self.lipschitz * (1.0 + 1e-9) {
                return Err(Error::InvalidParameter(format!("declared Lipschitz constant exceeded near u = {}", xs[k])));
            }
            if ys[k - 1] + ys[k + 1] - 2.0 * ys[k] > 1e-12 * (1.0 + ys[k].abs()) {
                bad += 1;
            }
        }
        if bad > 0 {
            log::warn!("nonlinearity fails the concavity spot check at {bad} grid points");
        }
        Ok(bad)
    }
}

/// Density, potential and the field it induces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledState {
    pub scheme: SchemeState,
    pub potential: Potential,
    /// b = ∇φ on each triangle.
    pub field: Vec<Vec2>,
    pub coeffs: FaceCoeffs,
    pub divergence: DivergenceCheck,
}

fn coupled_field(mesh: &GeneralMesh, space: &P1Space, g: &Nonlinearity, u: &CellValues) -> Result<(Potential, FaceCoeffs, DivergenceCheck)> {
    let gv: Vec<f64> = u.values.iter().map(|&v| (g.g)(v)).collect();
    let pot = fem_poisson_solve(space, &gv)?;
    let a = project_to_face_piecewise_constant(mesh, &pot.grad)?;
    let div = divergence_identity(mesh, space, &a, &gv)?;
    Ok((pot, a, div))
}

impl CoupledState {
    pub fn new(mesh: &GeneralMesh, space: &P1Space, g: &Nonlinearity, u0: CellValues) -> Result<Self> {
        let scheme = SchemeState::new(mesh, u0);
        let (potential, coeffs, divergence) = coupled_field(mesh, space, g, &scheme.u)?;
        Ok(CoupledState { field: potential.grad.clone(), scheme, potential, coeffs, divergence })
    }
}

fn combine(u: &[f64], k: &[f64], s: f64) -> CellValues {
    CellValues { values: u.iter().zip(k).map(|(a, b)| a + s * b).collect() }
}

/// Advance one step: rebuild g^χ, solve Poisson, set b = ∇φ, project to faces, step upwind.
/// `dt_max` caps the CFL step (used to land on output times).
pub fn coupled_step(
    mesh: &GeneralMesh,
    space: &P1Space,
    state: &CoupledState,
    g: &Nonlinearity,
    spec: &StepperSpec,
    mode: CouplingMode,
    dt_max: f64,
) -> Result<CoupledState> {
    let (limit, cell) = cfl_limit(mesh, &state.coeffs);
    let dt = match spec.dt {
        Some(dt) if dt > spec.cfl * limit * (1.0 + 1e-12) => {
            return Err(Error::Cfl { cell: cell.unwrap_or(0), dt, limit: spec.cfl * limit });
        }
        Some(dt) => dt.min(dt_max),
        None if limit.is_finite() => (spec.cfl * limit).min(dt_max),
        None => dt_max,
    };
    let u = &state.scheme.u.values;
    let a0 = &state.coeffs;
    let stage = |v: &CellValues| -> Result<FaceCoeffs> {
        match mode {
            CouplingMode::PerStep => Ok(a0.clone()),
            CouplingMode::StageExact => Ok(coupled_field(mesh, space, g, v)?.1),
        }
    };
    let (new_u, leak) = match spec.method {
        Method::ExplicitEuler => {
            let (k1, l1) = assemble_rhs(mesh, a0, &state.scheme.u)?;
            (combine(u, &k1.values, dt), -dt * l1.total)
        }
        Method::Rk4 => {
            let (k1, l1) = assemble_rhs(mesh, a0, &state.scheme.u)?;
            let u2 = combine(u, &k1.values, 0.5 * dt);
            let (k2, l2) = assemble_rhs(mesh, &stage(&u2)?, &u2)?;
            let u3 = combine(u, &k2.values, 0.5 * dt);
            let (k3, l3) = assemble_rhs(mesh, &stage(&u3)?, &u3)?;
            let u4 = combine(u, &k3.values, dt);
            let (k4, l4) = assemble_rhs(mesh, &stage(&u4)?, &u4)?;
            let v = (0..u.len())
                .map(|i| u[i] + dt / 6.0 * (k1.values[i] + 2.0 * k2.values[i] + 2.0 * k3.values[i] + k4.values[i]))
                .collect();
            (CellValues { values: v }, -dt / 6.0 * (l1.total + 2.0 * l2.total + 2.0 * l3.total + l4.total))
        }
    };
    let scheme = SchemeState { t: state.scheme.t + dt, u: new_u, leaked: state.scheme.leaked + leak };
    let (potential, coeffs, divergence) = coupled_field(mesh, space, g, &scheme.u)?;
    Ok(CoupledState { field: potential.grad.clone(), scheme, potential, coeffs, divergence })
}

/// One row of the coupled trajectory CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRecord {
    pub t: f64,
    pub mass: f64,
    pub potential_min: f64,
    pub potential_max: f64,
    pub div_sup: f64,
    pub leak_total: f64,
    pub divergence_error: f64,
    pub variational_residual: f64,
}

impl CoupledRecord {
    fn of(mesh: &GeneralMesh, s: &CoupledState) -> Self {
        let (lo, hi) = s.potential.range();
        CoupledRecord {
            t: s.scheme.t,
            mass: s.scheme.mass(mesh),
            potential_min: lo,
            potential_max: hi,
            div_sup: s.divergence.div_sup,
            leak_total: s.scheme.leaked,
            divergence_error: s.divergence.max_error,
            variational_residual: s.potential.variational_residual,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledTrajectory {
    pub records: Vec<CoupledRecord>,
    pub last: CoupledState,
}

/// Run the coupled scheme to `t_end`, recording every step.
pub fn coupled_run(
    mesh: &GeneralMesh,
    space: &P1Space,
    u0: CellValues,
    g: &Nonlinearity,
    t_end: f64,
    spec: &StepperSpec,
    mode: CouplingMode,
) -> Result<CoupledTrajectory> {
    let u_max = u0.values.iter().fold(0.0f64, |m, &v| m.max(v));
    g.check(u_max.max(1.0))?;
    let mut st = CoupledState::new(mesh, space, g, u0)?;
    let mut records = vec![CoupledRecord::of(mesh, &st)];
    let scale = t_end.abs().max(1.0);
    while st.scheme.t < t_end - 1e-14 * scale {
        st = coupled_step(mesh, space, &st, g, spec, mode, t_end - st.scheme.t)?;
        records.push(CoupledRecord::of(mesh, &st));
    }
    Ok(CoupledTrajectory { records, last: st })
}

pub fn write_coupled_csv<W: Write>(traj: &CoupledTrajectory, mut w: W) -> Result<()> {
    writeln!(w, "t,mass,potential_min,potential_max,div_sup,leak_total")?;
    for r in &traj.records {
        writeln!(w, "{:e},{:e},{:e},{:e},{:e},{:e}", r.t, r.mass, r.potential_min, r.potential_max, r.div_sup, r.leak_total)?;
    }
    Ok(())
}

/// One refinement level of a leak study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakSample {
    pub delta_x: f64,
    pub leak: f64,
    /// Measured max_i Σ_j a_{j,i}/π_i times δx.
    pub m_lambda: f64,
}

/// Measured leak against the exp(−Λ_T/δx) trend, Λ_T = (L_∂ − M_λT)/2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakReport {
    pub lambda_t: f64,
    /// Horizon L_∂/M_λ below which Λ_T > 0.
    pub feasible_t: f64,
    pub skipped: bool,
    pub diagnostic: String,
    /// Least-squares slope of log(leak) against 1/δx over the samples with positive leak.
    pub slope: Option<f64>,
    pub max_leak: f64,
}

pub fn leak_bound_check(samples: &[LeakSample], l_boundary: f64, t_end: f64) -> LeakReport {
    let m_lambda = samples.iter().fold(0.0f64, |m, s| m.max(s.m_lambda));
    let lambda_t = 0.5 * (l_boundary - m_lambda * t_end);
    let feasible_t = if m_lambda > 0.0 { l_boundary / m_lambda } else { f64::INFINITY };
    let max_leak = samples.iter().fold(0.0f64, |m, s| m.max(s.leak));
    if lambda_t <= 0.0 {
        return LeakReport {
            lambda_t,
            feasible_t,
            skipped: true,
            diagnostic: format!("Λ_T = {lambda_t:e} ≤ 0: T exceeds the feasible horizon {feasible_t:e}"),
            slope: None,
            max_leak,
        };
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.leak > 0.0).map(|s| (1.0 / s.delta_x, s.leak.ln())).collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let diagnostic = match slope {
        Some(s) => format!("log-linear slope {s:e} against 1/δx"),
        None => "fewer than two levels with measurable leak".into(),
    };
    LeakReport { lambda_t, feasible_t, skipped: false, diagnostic, slope, max_leak }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_core::{hat_mesh_from_triangulation, Domain};

    fn disc(rings: usize) -> GeneralMesh {
        let tri = Triangulation::disc([0.0, 0.0], 1.0, rings).unwrap();
        hat_mesh_from_triangulation(tri, Domain::disc([0.0, 0.0], 1.0, 6 * rings)).unwrap()
    }

    #[test]
    fn zero_source_zero_potential() {
        let m = disc(4);
        let sp = P1Space::new(&m).unwrap();
        let p = fem_poisson_solve(&sp, &vec![0.0; sp.n_nodes()]).unwrap();
        assert!(p.phi.iter().all(|&v| v == 0.0));
        assert!(p.grad.iter().all(|g| *g == [0.0, 0.0]));
    }

    #[test]
    fn unit_source_centre_value() {
        let m = disc(16);
        let sp = P1Space::new(&m).unwrap();
        let p = fem_poisson_solve(&sp, &vec![1.0; sp.n_nodes()]).unwrap();
        assert!(p.variational_residual < 1e-10);
        assert!((p.phi[0] - 0.25).abs() < 5e-3, "{}", p.phi[0]);
    }

    #[test]
    fn zero_nonlinearity_freezes() {
        let m = disc(6);
        let sp = P1Space::new(&m).unwrap();
        let zero = |_: f64| 0.0;
        let g = Nonlinearity { g: &zero, lipschitz: 1.0 };
        let u0 = CellValues { values: (0..m.n_cells()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect() };
        let tr = coupled_run(&m, &sp, u0.clone(), &g, 0.1, &StepperSpec::default(), CouplingMode::PerStep).unwrap();
        assert_eq!(tr.last.scheme.u, u0);
    }

    #[test]
    fn csr_merges_duplicates() {
        let a = Csr::from_triplets(2, vec![(1, 0, 1.0), (0, 0, 2.0), (1, 0, 3.0)]);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.mul(&[1.0, 1.0]), vec![2.0, 4.0]);
    }

    #[test]
    fn leak_check_skips_infeasible_horizon() {
        let r = leak_bound_check(&[LeakSample { delta_x: 0.1, leak: 1e-3, m_lambda: 2.0 }], 0.3, 1.0);
        assert!(r.skipped);
    }
}
