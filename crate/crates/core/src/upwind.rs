//! The semi-discrete upwind scheme, its time integration with leak accounting,
//! and a jump-process Monte Carlo oracle.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{CellValues, FaceCoeffs};
use crate::error::{Error, Result};
use crate::mesh_core::GeneralMesh;

/// Density, time and cumulative leaked mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeState {
    pub t: f64,
    pub u: CellValues,
    pub leaked: f64,
}

impl SchemeState {
    /// Initial state; values outside V_Ω° are set to zero.
    pub fn new(mesh: &GeneralMesh, mut u: CellValues) -> Self {
        for (i, v) in u.values.iter_mut().enumerate() {
            if !mesh.interior[i] {
                *v = 0.0;
            }
        }
        SchemeState { t: 0.0, u, leaked: 0.0 }
    }

    pub fn mass(&self, mesh: &GeneralMesh) -> f64 {
        self.u.mass(mesh)
    }
}

/// Leak terms R_i (nonzero only on frozen cells) and Σ R_i π_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakLedger {
    pub r: Vec<f64>,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExplicitEuler,
    Rk4,
}

/// Time-stepping choices; missing fields take their defaults when deserialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperSpec {
    pub method: Method,
    /// Safety factor c ∈ (0, 1].
    pub cfl: f64,
    /// Fixed step; `None` picks c times the CFL limit at every step.
    pub dt: Option<f64>,
    /// Record the state at multiples of this interval (and always at the end).
    pub output_interval: Option<f64>,
}

impl Default for StepperSpec {
    fn default() -> Self {
        StepperSpec { method: Method::Rk4, cfl: 0.5, dt: None, output_interval: None }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub leaked: f64,
    /// |Δ mass + Δ leaked| for the step.
    pub conservation_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SchemeState>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &SchemeState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

fn check_sizes(mesh: &GeneralMesh, a: &FaceCoeffs, u: &CellValues) -> Result<()> {
    if a.values.len() != mesh.n_edges() {
        return Err(Error::Mismatch(format!("{} coefficients for {} edges", a.values.len(), mesh.n_edges())));
    }
    if u.values.len() != mesh.n_cells() {
        return Err(Error::Mismatch(format!("{} densities for {} cells", u.values.len(), mesh.n_cells())));
    }
    Ok(())
}

/// (du/dt)_i = (1/π_i)Σ_j(a_{i,j}u_j − a_{j,i}u_i) on V_Ω°, 0 on frozen cells,
/// together with R_i = −(1/π_i)Σ_j a_{i,j}u_j on frozen cells.
pub fn assemble_rhs(mesh: &GeneralMesh, a: &FaceCoeffs, u: &CellValues) -> Result<(CellValues, LeakLedger)> {
    check_sizes(mesh, a, u)?;
    if let Some(i) = (0..mesh.n_cells()).find(|&i| !mesh.interior[i] && u.values[i] != 0.0) {
        return Err(Error::Mismatch(format!("density is nonzero on frozen cell {i}")));
    }
    let n = mesh.n_cells();
    let mut flux = vec![0.0; n];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        let into_i = aij * u.values[ed.j] - aji * u.values[ed.i];
        flux[ed.i] += into_i;
        flux[ed.j] -= into_i;
    }
    let mut rhs = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        if mesh.interior[i] {
            rhs[i] = flux[i] / mesh.volumes[i];
        } else {
            // u_i = 0, so the net flux is the discarded inflow
            r[i] = -flux[i] / mesh.volumes[i];
            total += -flux[i];
        }
    }
    Ok((CellValues { values: rhs }, LeakLedger { r, total }))
}

/// Largest stable step min_i π_i / Σ_j a_{j,i} over interior cells, with the limiting cell.
pub fn cfl_limit(mesh: &GeneralMesh, a: &FaceCoeffs) -> (f64, Option<usize>) {
    let mut out = vec![0.0; mesh.n_cells()];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        out[ed.j] += aij;
        out[ed.i] += aji;
    }
    let mut best = (f64::INFINITY, None);
    for i in 0..mesh.n_cells() {
        if mesh.interior[i] && out[i] > 0.0 {
            let l = mesh.volumes[i] / out[i];
            if l < best.0 {
                best = (l, Some(i));
            }
        }
    }
    best
}

fn axpy(u: &[f64], k: &[f64], s: f64) -> CellValues {
    CellValues { values: u.iter().zip(k).map(|(a, b)| a + s * b).collect() }
}

/// Integrate from `state.t` to `t_end`; `coeffs(t)` supplies the coefficients at time t.
pub fn integrate<P>(mesh: &GeneralMesh, state: SchemeState, coeffs: P, t_end: f64, spec: &StepperSpec) -> Result<Trajectory>
where
    P: Fn(f64) -> Result<FaceCoeffs>,
{
    if !(spec.cfl > 0.0 && spec.cfl <= 1.0) {
        return Err(Error::InvalidParameter(format!("CFL factor must lie in (0, 1], got {}", spec.cfl)));
    }
    if let Some(dt) = spec.dt {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("fixed dt must be positive".into()));
        }
    }
    let mut st = state;
    let mut traj = Trajectory { states: vec![st.clone()], steps: vec![] };
    let mut next_out = spec.output_interval.map(|h| st.t + h);
    let scale_t = t_end.abs().max(1.0);
    while st.t < t_end - 1e-14 * scale_t {
        let a0 = coeffs(st.t)?;
        let (limit, cell) = cfl_limit(mesh, &a0);
        let mut dt = match spec.dt {
            Some(dt) => {
                if dt > spec.cfl * limit * (1.0 + 1e-12) {
                    return Err(Error::Cfl { cell: cell.unwrap_or(0), dt, limit: spec.cfl * limit });
                }
                dt
            }
            None => {
                if limit.is_finite() {
                    spec.cfl * limit
                } else {
                    t_end - st.t
                }
            }
        };
        let mut hit_output = false;
        if let Some(to) = next_out {
            if st.t + dt >= to - 1e-14 * scale_t && to < t_end {
                dt = to - st.t;
                hit_output = true;
            }
        }
        if st.t + dt > t_end {
            dt = t_end - st.t;
        }
        let mass0 = st.mass(mesh);
        let u = &st.u.values;
        let (new_u, leak_inc) = match spec.method {
            Method::ExplicitEuler => {
                let (k1, l1) = assemble_rhs(mesh, &a0, &st.u)?;
                (axpy(u, &k1.values, dt), -dt * l1.total)
            }
            Method::Rk4 => {
                let ah = coeffs(st.t + 0.5 * dt)?;
                let a1 = coeffs(st.t + dt)?;
                let (k1, l1) = assemble_rhs(mesh, &a0, &st.u)?;
                let (k2, l2) = assemble_rhs(mesh, &ah, &axpy(u, &k1.values, 0.5 * dt))?;
                let (k3, l3) = assemble_rhs(mesh, &ah, &axpy(u, &k2.values, 0.5 * dt))?;
                let (k4, l4) = assemble_rhs(mesh, &a1, &axpy(u, &k3.values, dt))?;
                let values = (0..u.len())
                    .map(|i| u[i] + dt / 6.0 * (k1.values[i] + 2.0 * k2.values[i] + 2.0 * k3.values[i] + k4.values[i]))
                    .collect();
                let inc = -dt / 6.0 * (l1.total + 2.0 * l2.total + 2.0 * l3.total + l4.total);
                (CellValues { values }, inc)
            }
        };
        if spec.method == Method::ExplicitEuler {
            let tol = 1e-13 * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if u.iter().all(|&v| v >= 0.0) {
                if let Some((cell, &value)) = new_u.values.iter().enumerate().find(|(_, &v)| v < -tol) {
                    return Err(Error::Positivity { cell, value });
                }
            }
        }
        st = SchemeState { t: st.t + dt, u: new_u, leaked: st.leaked + leak_inc };
        let mass = st.mass(mesh);
        traj.steps.push(StepRecord {
            t: st.t,
            dt,
            mass,
            leaked: st.leaked,
            conservation_defect: (mass - mass0 + leak_inc).abs(),
        });
        if hit_output {
            traj.states.push(st.clone());
            next_out = next_out.map(|to| to + spec.output_interval.unwrap());
        }
    }
    if traj.states.last().map(|s| s.t) != Some(st.t) {
        traj.states.push(st);
    }
    Ok(traj)
}

/// Trajectory CSV with columns t, cell_id, u, pi, leaked_total.
pub fn write_trajectory_csv<W: Write>(mesh: &GeneralMesh, traj: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "t,cell_id,u,pi,leaked_total")?;
    for s in &traj.states {
        for (i, u) in s.u.values.iter().enumerate() {
            writeln!(w, "{:e},{},{:e},{:e},{:e}", s.t, i, u, mesh.volumes[i], s.leaked)?;
        }
    }
    Ok(())
}

/// Monte Carlo estimate of u(t) with per-cell standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub u: CellValues,
    pub stderr: CellValues,
    /// Fraction of the initial mass absorbed by frozen cells.
    pub leaked_fraction: f64,
    pub leaked_stderr: f64,
    pub walkers: usize,
}

/// Jump process with rates a_{i',i}/π_i from cell i to i′, killed on entering a
/// frozen cell; walkers start from u₀π normalised to a probability. Walker `k`
/// uses stream `k` of a ChaCha8 generator seeded with `seed`.
pub fn monte_carlo_oracle(
    mesh: &GeneralMesh,
    a: &FaceCoeffs,
    u0: &CellValues,
    t: f64,
    walkers: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_sizes(mesh, a, u0)?;
    if walkers == 0 {
        return Err(Error::InvalidParameter("walker count must be positive".into()));
    }
    if u0.values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("initial density must be nonnegative".into()));
    }
    let n = mesh.n_cells();
    let weights: Vec<f64> = (0..n).map(|i| u0.values[i] * mesh.volumes[i]).collect();
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter("initial mass must be positive".into()));
    }
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / mass;
        cdf.push(acc);
    }
    // outgoing jumps: (target, cumulative rate)
    let mut jumps: Vec<Vec<(usize, f64)>> = vec![vec![]; n];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        if aij > 0.0 {
            jumps[ed.j].push((ed.i, aij / mesh.volumes[ed.j]));
        }
        if aji > 0.0 {
            jumps[ed.i].push((ed.j, aji / mesh.volumes[ed.i]));
        }
    }
    let totals: Vec<f64> = jumps
        .iter_mut()
        .map(|js| {
            let mut c = 0.0;
            for j in js.iter_mut() {
                c += j.1;
                j.1 = c;
            }
            c
        })
        .collect();
    let finals: Vec<Option<usize>> = (0..walkers as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let x: f64 = rng.gen();
            let mut cell = cdf.partition_point(|&c| c < x).min(n - 1);
            while weights[cell] == 0.0 {
                cell += 1;
            }
            let mut time = 0.0;
            loop {
                let rate = totals[cell];
                if rate <= 0.0 {
                    return Some(cell);
                }
                let u: f64 = rng.gen();
                time += -(1.0 - u).ln() / rate;
                if time > t {
                    return Some(cell);
                }
                let pick = rng.gen::<f64>() * rate;
                let js = &jumps[cell];
                let idx = js.partition_point(|&(_, c)| c < pick).min(js.len() - 1);
                cell = js[idx].0;
                if !mesh.interior[cell] {
                    return None;
                }
            }
        })
        .collect();
    let mut counts = vec![0usize; n];
    let mut dead = 0usize;
    for f in finals {
        match f {
            Some(c) => counts[c] += 1,
            None => dead += 1,
        }
    }
    let nf = walkers as f64;
    let mut u = vec![0.0; n];
    let mut se = vec![0.0; n];
    for i in 0..n {
        let p = counts[i] as f64 / nf;
        u[i] = mass * p / mesh.volumes[i];
        se[i] = mass * (p * (1.0 - p) / nf).sqrt() / mesh.volumes[i];
    }
    let q = dead as f64 / nf;
    Ok(MonteCarloEstimate {
        u: CellValues { values: u },
        stderr: CellValues { values: se },
        leaked_fraction: q,
        leaked_stderr: (q * (1.0 - q) / nf).sqrt(),
        walkers,
    })
}
