//! The six experiments, their artifacts and the summary they produce.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use upwind_core::coupling::{coupled_run, leak_bound_check, write_coupled_csv, LeakSample, Nonlinearity, P1Space};
use upwind_core::discretize::{project_to_cell, project_to_face, CellValues, FaceCoeffs, QuadratureSpec};
use upwind_core::fields::FieldSpec;
use upwind_core::geom::{self, Vec2};
use upwind_core::mesh_core::*;
use upwind_core::seminorm::{discrete_seminorm, fractional_sobolev_multi, SemiNormScan, VirtualCoordinates};
use upwind_core::upwind::{integrate, monte_carlo_oracle, write_trajectory_csv, SchemeState, Trajectory};
use upwind_core::vcoords::{build_admissible_family, constant_field_coeffs, constant_projection, residue_field};

use crate::config::{CellFunctions, ConfigError, ExperimentConfig, ExperimentKind, InitialProfile, MeshConfig, MeshGenerator};

/// Version of the CSV layouts documented in the README; bumped on any column change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Failure of a run, with the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] upwind_core::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Output { .. } => 3,
        }
    }
}

/// Output directory bookkeeping.
struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| ConfigError::Invalid(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: vec![] })
    }

    fn output_error(&self, name: &str, e: impl std::fmt::Display) -> RunError {
        RunError::Output { path: self.dir.join(name), message: e.to_string() }
    }

    /// Write one artifact completely and flush it before returning.
    fn write<F>(&mut self, name: &str, body: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), RunError>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| self.output_error(name, e))?;
        let mut w = BufWriter::new(file);
        let res = body(&mut w);
        w.flush().map_err(|e| self.output_error(name, e))?;
        self.written.push(name.to_string());
        log::info!("wrote {}", path.display());
        res
    }
}

fn io_err(e: std::io::Error) -> RunError {
    RunError::Numerical(e.into())
}

/// Measured quantities by name; keys serialize in sorted order.
#[derive(Default)]
struct Measured(Map<String, Value>);

impl Measured {
    fn put<T: Serialize>(&mut self, key: &str, value: T) {
        self.0.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }
}

/// Run a resolved configuration into `out`; the summary is written even on failure.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<(), RunError> {
    let mut arts = Artifacts::new(out)?;
    let mut measured = Measured::default();
    log::info!("running {} into {}", cfg.experiment.name(), out.display());
    let res = match cfg.experiment {
        ExperimentKind::Advect => advect(cfg, &mut arts, &mut measured),
        ExperimentKind::Example16 => example16(cfg, &mut arts, &mut measured),
        ExperimentKind::VcoordsScan => vcoords_scan(cfg, &mut arts, &mut measured),
        ExperimentKind::SeminormPropagation => seminorm_propagation(cfg, &mut arts, &mut measured),
        ExperimentKind::ResidueDecay => residue_decay(cfg, &mut arts, &mut measured),
        ExperimentKind::Coupled => coupled(cfg, &mut arts, &mut measured),
    };
    let (status, error) = match &res {
        Ok(()) => ("ok", Value::Null),
        Err(e) => ("failed", Value::String(e.to_string())),
    };
    let mut artifacts = arts.written.clone();
    artifacts.push("summary.json".into());
    let summary = json!({
        "version": upwind_core::VERSION,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "experiment": cfg.experiment.name(),
        "status": status,
        "error": error,
        "config": cfg,
        "artifacts": artifacts,
        "measured": Value::Object(measured.0),
    });
    arts.write("summary.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(|e| RunError::Numerical(e.into()))?;
        writeln!(w).map_err(io_err)
    })?;
    res
}

/// Mesh construction errors from bad parameters are configuration errors.
fn config_if_param(e: upwind_core::Error) -> RunError {
    match e {
        upwind_core::Error::InvalidParameter(m) | upwind_core::Error::Format(m) | upwind_core::Error::Io(m) => {
            ConfigError::Invalid(m).into()
        }
        e => e.into(),
    }
}

fn polygon_cells(m: &MeshConfig, pm: &PolygonMesh) -> Result<GeneralMesh, RunError> {
    let dx = pm.delta_x;
    let halo = m.halo.unwrap_or(0.0) * dx;
    match m.cells.unwrap_or(CellFunctions::Sharp) {
        CellFunctions::Sharp => sharp_polygon_mesh(pm, halo),
        CellFunctions::Mollified => mollify_polygon_mesh_with(pm, m.mollify_radius.unwrap_or(0.25) * dx, halo),
    }
    .map_err(config_if_param)
}

/// Build the mesh of a resolved config at parameter `h`.
fn build_mesh(m: &MeshConfig, h: f64) -> Result<GeneralMesh, RunError> {
    let rect = || {
        let [lo, hi] = m.domain.unwrap_or([[0.0, 0.0], [1.0, 1.0]]);
        (lo, hi, Domain::rect(lo, hi))
    };
    let pm = match m.generator {
        MeshGenerator::Cartesian => {
            let (lo, hi, d) = rect();
            let nx = ((hi[0] - lo[0]) / h).round().max(1.0) as usize;
            let ny = ((hi[1] - lo[1]) / h).round().max(1.0) as usize;
            build_cartesian_mesh(nx, ny, d)
        }
        MeshGenerator::Alternating => build_alternating_mesh(h, rect().2),
        MeshGenerator::Hexagonal => build_hexagonal_mesh(h, rect().2),
        MeshGenerator::Disc => {
            let (c, r) = (m.center.unwrap_or([0.0, 0.0]), m.radius.unwrap_or(1.0));
            let rings = (r / h).round().max(1.0) as usize;
            let tri = Triangulation::disc(c, r, rings).map_err(config_if_param)?;
            return hat_mesh_from_triangulation(tri, Domain::disc(c, r, 6 * rings)).map_err(config_if_param);
        }
        MeshGenerator::File => {
            let path = m.path.as_ref().expect("resolved file configs carry a path");
            match read_mesh(path).map_err(config_if_param)? {
                f @ MeshFile::Polygon { .. } => f.into_polygon(),
                f @ MeshFile::Triangulation { .. } => {
                    let (tri, domain) = f.into_triangulation().map_err(config_if_param)?;
                    return hat_mesh_from_triangulation(tri, domain).map_err(config_if_param);
                }
            }
        }
    }
    .map_err(config_if_param)?;
    polygon_cells(m, &pm)
}

fn levels(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.mesh.refinements.clone().unwrap_or_else(|| vec![cfg.mesh.h.unwrap_or(0.0)])
}

fn primary_h(cfg: &ExperimentConfig) -> f64 {
    cfg.mesh.h.unwrap_or(0.0)
}

fn bump(x: Vec2, c: Vec2, r: f64) -> f64 {
    let d2 = geom::dist(x, c).powi(2) / (r * r);
    if d2 < 1.0 {
        (1.0 - d2).powi(3)
    } else {
        0.0
    }
}

fn initial_density(mesh: &GeneralMesh, p: &InitialProfile, q: &QuadratureSpec) -> Result<CellValues, RunError> {
    let u = match *p {
        InitialProfile::Bump { center, radius } => project_to_cell(mesh, |x| bump(x, center, radius), q)?,
        InitialProfile::Disc { center, radius } => {
            project_to_cell(mesh, |x| if geom::dist(x, center) < radius { 1.0 } else { 0.0 }, q)?
        }
        InitialProfile::Constant { value } => project_to_cell(mesh, |_| value, q)?,
        InitialProfile::Plateau { x_min, x_max } => CellValues {
            values: (0..mesh.n_cells())
                .map(|i| {
                    let x = mesh.barycenters[i][0];
                    if mesh.interior[i] && x > x_min && x < x_max {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        },
    };
    Ok(u)
}

fn field_of(cfg: &ExperimentConfig) -> &FieldSpec {
    cfg.field.as_ref().expect("resolved configs carry a field")
}

fn advect_on(mesh: &GeneralMesh, cfg: &ExperimentConfig, u0: CellValues) -> Result<Trajectory, RunError> {
    let f = field_of(cfg);
    let q = cfg.quadrature;
    let t_end = cfg.t_end.unwrap_or(1.0);
    let traj = if f.is_time_dependent() {
        integrate(mesh, SchemeState::new(mesh, u0), |t| Ok(project_to_face(mesh, |x| f.eval(t, x), &q)?.with_time(t)), t_end, &cfg.stepper)?
    } else {
        let a = project_to_face(mesh, |x| f.eval(0.0, x), &q)?;
        integrate(mesh, SchemeState::new(mesh, u0), |_| Ok(a.clone()), t_end, &cfg.stepper)?
    };
    Ok(traj)
}

fn mesh_summary(mesh: &GeneralMesh) -> Value {
    json!({
        "cells": mesh.n_cells(),
        "edges": mesh.n_edges(),
        "interior_cells": mesh.interior.iter().filter(|&&b| b).count(),
        "delta_x": mesh.delta_x,
        "structural": validate_structural(mesh),
    })
}

fn write_scan_rows<W: Write>(w: &mut W, prefix: &str, scan: &SemiNormScan) -> std::io::Result<()> {
    for (h, raw, wv) in &scan.rows {
        writeln!(w, "{prefix},{h:e},{raw:e},{wv:e}")?;
    }
    Ok(())
}

fn advect(cfg: &ExperimentConfig, arts: &mut Artifacts, measured: &mut Measured) -> Result<(), RunError> {
    let mesh = build_mesh(&cfg.mesh, primary_h(cfg))?;
    measured.put("mesh", mesh_summary(&mesh));
    let u0 = initial_density(&mesh, cfg.initial.as_ref().unwrap(), &cfg.quadrature)?;
    let state0 = SchemeState::new(&mesh, u0.clone());
    let mass0 = state0.mass(&mesh);
    let traj = advect_on(&mesh, cfg, u0.clone())?;
    arts.write("trajectory.csv", |w| Ok(write_trajectory_csv(&mesh, &traj, w)?))?;
    let last = traj.last();
    measured.put("steps", traj.steps.len());
    measured.put("mass_initial", mass0);
    measured.put("mass_final", last.mass(&mesh));
    measured.put("leak_total", last.leaked);
    measured.put("mass_balance_defect", last.mass(&mesh) + last.leaked - mass0);

    let params = cfg.seminorm.params()?;
    let coords = VirtualCoordinates::barycenters(&mesh);
    let s0 = discrete_seminorm(&mesh, &state0.u, &params, &coords)?;
    let s1 = discrete_seminorm(&mesh, &last.u, &params, &coords)?;
    arts.write("seminorm.csv", |w| {
        writeln!(w, "t,h,raw_double_sum,weighted_value").map_err(io_err)?;
        write_scan_rows(w, &format!("{:e}", 0.0), &s0).map_err(io_err)?;
        write_scan_rows(w, &format!("{:e}", last.t), &s1).map_err(io_err)
    })?;
    measured.put("seminorm_initial", s0.norm);
    measured.put("seminorm_final", s1.norm);

    if cfg.walkers > 0 {
        let f = field_of(cfg);
        let a = project_to_face(&mesh, |x| f.eval(0.0, x), &cfg.quadrature)?;
        let mc = monte_carlo_oracle(&mesh, &a, &state0.u, last.t, cfg.walkers, cfg.seed)?;
        let mut within = 0usize;
        let mut counted = 0usize;
        let mut unvisited_max = 0.0f64;
        arts.write("monte_carlo.csv", |w| {
            writeln!(w, "cell_id,u_scheme,u_monte_carlo,stderr").map_err(io_err)?;
            for i in 0..mesh.n_cells() {
                let (u, v, s) = (last.u.values[i], mc.u.values[i], mc.stderr.values[i]);
                writeln!(w, "{i},{u:e},{v:e},{s:e}").map_err(io_err)?;
                // cells no walker reached carry no error estimate
                if mesh.interior[i] && s > 0.0 {
                    counted += 1;
                    within += usize::from((u - v).abs() <= 3.0 * s);
                } else if mesh.interior[i] {
                    unvisited_max = unvisited_max.max(u);
                }
            }
            Ok(())
        })?;
        measured.put(
            "monte_carlo",
            json!({
                "walkers": cfg.walkers,
                "seed": cfg.seed,
                "visited_cells": counted,
                "fraction_within_3_stderr": within as f64 / counted.max(1) as f64,
                "max_scheme_value_on_unvisited_cells": unvisited_max,
                "leaked_fraction": mc.leaked_fraction,
                "leaked_stderr": mc.leaked_stderr,
                "scheme_leaked_fraction": last.leaked / mass0,
            }),
        );
    }
    Ok(())
}

/// Least-squares slope of log y against log x.
fn log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn interior_fractional(mesh: &GeneralMesh, u: &CellValues, s: &[f64], p: f64) -> Result<Vec<f64>, RunError> {
    let keep: Vec<usize> = (0..mesh.n_cells()).filter(|&i| mesh.interior[i]).collect();
    let vol: Vec<f64> = keep.iter().map(|&i| mesh.volumes[i]).collect();
    let vals: Vec<f64> = keep.iter().map(|&i| u.values[i]).collect();
    let pts: Vec<Vec2> = keep.iter().map(|&i| mesh.barycenters[i]).collect();
    Ok(fractional_sobolev_multi(&vol, &vals, &VirtualCoordinates::from_points(&pts), s, p)?)
}

fn example16(cfg: &ExperimentConfig, arts: &mut Artifacts, measured: &mut Measured) -> Result<(), RunError> {
    let s_grid = cfg.s_grid.clone().unwrap_or_default();
    let p = cfg.seminorm.p;
    let hs = levels(cfg);
    let mut rows = vec![];
    let mut meshes = vec![];
    let mut final_norms: Vec<Vec<f64>> = vec![];
    let mut res = Ok(());
    for &h in &hs {
        let step = (|| {
            let mesh = build_mesh(&cfg.mesh, h)?;
            let u0 = initial_density(&mesh, cfg.initial.as_ref().unwrap(), &cfg.quadrature)?;
            let traj = advect_on(&mesh, cfg, u0)?;
            let n0 = interior_fractional(&mesh, &traj.states[0].u, &s_grid, p)?;
            let n1 = interior_fractional(&mesh, &traj.last().u, &s_grid, p)?;
            Ok::<_, RunError>((mesh_summary(&mesh), mesh.delta_x, n0, n1))
        })();
        match step {
            Ok((ms, dx, n0, n1)) => {
                for (k, &s) in s_grid.iter().enumerate() {
                    rows.push(format!("{h:e},{dx:e},{s:e},{:e},{:e}", n0[k], n1[k]));
                }
                meshes.push(ms);
                final_norms.push(n1);
            }
            Err(e) => {
                res = Err(e);
                break;
            }
        }
    }
    arts.write("fractional.csv", |w| {
        writeln!(w, "h,delta_x,s,norm_initial,norm_final").map_err(io_err)?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}")).map_err(io_err)
    })?;
    measured.put("meshes", &meshes);
    let done = final_norms.len();
    let by_s: Vec<Value> = s_grid
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let ys: Vec<f64> = final_norms.iter().map(|n| n[k]).collect();
            let inv_h: Vec<f64> = hs[..done].iter().map(|h| 1.0 / h).collect();
            json!({
                "s": s,
                "finest_over_coarsest": if done >= 2 { Value::from(ys[done - 1] / ys[0]) } else { Value::Null },
                "growth_exponent": log_slope(&inv_h, &ys),
            })
        })
        .collect();
    measured.put("fractional_norm_growth", by_s);
    res
}

fn vcoords_scan(cfg: &ExperimentConfig, arts: &mut Artifacts, measured: &mut Measured) -> Result<(), RunError> {
    let mesh = build_mesh(&cfg.mesh, primary_h(cfg))?;
    measured.put("mesh", mesh_summary(&mesh));
    let ps = periodic_from_tags(&mesh)?;
    let fam = build_admissible_family(&mesh, &ps, cfg.directions.unwrap_or(64))?;
    arts.write("residue.csv", |w| Ok(fam.write_csv(&mesh, w)?))?;
    let worst = (0..mesh.n_cells()).filter(|&i| mesh.interior[i]).fold(0.0f64, |m, i| m.max(fam.r_max[i]));
    measured.put("directions", fam.directions.len());
    measured.put("pattern_size", ps.pattern_size());
    measured.put("m_beta", fam.m_beta);
    measured.put("m_gamma", fam.m_gamma);
    measured.put("m_beta_over_delta_x", fam.m_beta_relative());
    measured.put("m_gamma_over_delta_x", fam.m_gamma_relative());
    measured.put("m_xi", json!({ "l1": fam.m_xi[0], "l2": fam.m_xi[1], "linf": fam.m_xi[2] }));
    measured.put("max_interior_residue", worst);
    if let FieldSpec::Constant { value } = field_of(cfg) {
        if geom::norm(*value) > 0.0 {
            let (bary, virt) = residues_for(&mesh, &fam, *value)?;
            measured.put("field_residue", json!({ "barycentric": bary, "virtual": virt }));
        }
    }
    Ok(())
}

fn residues_for(
    mesh: &GeneralMesh,
    fam: &upwind_core::vcoords::AdmissibleFamily,
    b: Vec2,
) -> Result<(Value, Value), RunError> {
    let a: FaceCoeffs = constant_field_coeffs(mesh, b)?;
    let bt = constant_projection(mesh, b);
    let norms = |r: upwind_core::vcoords::ResidueReport| json!({ "l1": r.l1, "l2": r.l2, "linf": r.linf });
    let bary = residue_field(mesh, &a, &bt, &VirtualCoordinates::barycenters(mesh))?;
    let virt = residue_field(mesh, &a, &bt, &fam.coordinates(b)?)?;
    Ok((norms(bary), norms(virt)))
}

fn seminorm_propagation(cfg: &ExperimentConfig, arts: &mut Artifacts, measured: &mut Measured) -> Result<(), RunError> {
    let params = cfg.seminorm.params()?;
    let mut rows = vec![];
    let mut per_level = vec![];
    let mut res = Ok(());
    for &h in &levels(cfg) {
        let step = (|| {
            let mesh = build_mesh(&cfg.mesh, h)?;
            let u0 = initial_density(&mesh, cfg.initial.as_ref().unwrap(), &cfg.quadrature)?;
            let traj = advect_on(&mesh, cfg, u0)?;
            let c = VirtualCoordinates::barycenters(&mesh);
            let s0 = discrete_seminorm(&mesh, &traj.states[0].u, &params, &c)?;
            let s1 = discrete_seminorm(&mesh, &traj.last().u, &params, &c)?;
            Ok::<_, RunError>((mesh, traj, s0, s1))
        })();
        let (mesh, traj, s0, s1) = match step {
            Ok(v) => v,
            Err(e) => {
                res = Err(e);
                break;
            }
        };
        for (t, scan) in [(0.0, &s0), (traj.last().t, &s1)] {
            for (kh, raw, wv) in &scan.rows {
                rows.push(format!("{h:e},{t:e},{kh:e},{raw:e},{wv:e}"));
            }
        }
        per_level.push(json!({
            "h": h,
            "mesh": mesh_summary(&mesh),
            "seminorm_initial": s0.norm,
            "seminorm_final": s1.norm,
            "ratio": s1.norm / s0.norm,
            "argmax_h_final": s1.argmax_h,
            "leak_total": traj.last().leaked,
        }));
    }
    arts.write("seminorm.csv", |w| {
        writeln!(w, "mesh_h,t,h,raw_double_sum,weighted_value").map_err(io_err)?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}")).map_err(io_err)
    })?;
    let ratios: Vec<f64> = per_level.iter().filter_map(|l| l["ratio"].as_f64()).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    measured.put("levels", &per_level);
    if !ratios.is_empty() {
        measured.put("ratio_spread", hi / lo);
    }
    res
}

fn residue_decay(cfg: &ExperimentConfig, arts: &mut Artifacts, measured: &mut Measured) -> Result<(), RunError> {
    let FieldSpec::Constant { value: b } = *field_of(cfg) else {
        return Err(ConfigError::Invalid("residue-decay needs a constant field".into()).into());
    };
    let mut rows = vec![];
    let mut per_level = vec![];
    let mut res = Ok(());
    for &h in &levels(cfg) {
        let step = (|| {
            let mesh = build_mesh(&cfg.mesh, h)?;
            let ps = periodic_from_tags(&mesh)?;
            let fam = build_admissible_family(&mesh, &ps, cfg.directions.unwrap_or(64))?;
            let (bary, virt) = residues_for(&mesh, &fam, b)?;
            Ok::<_, RunError>((mesh, fam, bary, virt))
        })();
        let (mesh, fam, bary, virt) = match step {
            Ok(v) => v,
            Err(e) => {
                res = Err(e);
                break;
            }
        };
        let g = |v: &Value, k: &str| v[k].as_f64().unwrap_or(f64::NAN);
        rows.push(format!(
            "{h:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            mesh.delta_x,
            g(&bary, "l1"),
            g(&bary, "linf"),
            g(&virt, "l1"),
            g(&virt, "linf"),
            fam.m_beta_relative(),
            fam.m_gamma_relative(),
            fam.m_xi[0],
            fam.m_xi[2],
        ));
        per_level.push(json!({
            "h": h,
            "mesh": mesh_summary(&mesh),
            "barycentric_residue": bary,
            "virtual_residue": virt,
            "m_beta": fam.m_beta,
            "m_gamma": fam.m_gamma,
            "m_beta_over_delta_x": fam.m_beta_relative(),
            "m_gamma_over_delta_x": fam.m_gamma_relative(),
            "m_xi": { "l1": fam.m_xi[0], "l2": fam.m_xi[1], "linf": fam.m_xi[2] },
        }));
    }
    arts.write("residue_decay.csv", |w| {
        writeln!(
            w,
            "h,delta_x,barycentric_l1,barycentric_linf,virtual_l1,virtual_linf,m_beta_over_delta_x,m_gamma_over_delta_x,m_xi_l1,m_xi_linf"
        )
        .map_err(io_err)?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}")).map_err(io_err)
    })?;
    measured.put("levels", per_level);
    res
}

/// max_i Σ_j a_{j,i}/π_i times δx over interior cells.
fn outflow_rate(mesh: &GeneralMesh, a: &FaceCoeffs) -> f64 {
    let mut out = vec![0.0; mesh.n_cells()];
    for (e, ed) in mesh.edges.iter().enumerate() {
        let [aij, aji] = a.values[e];
        out[ed.i] += aji;
        out[ed.j] += aij;
    }
    (0..mesh.n_cells()).filter(|&i| mesh.interior[i]).fold(0.0f64, |m, i| m.max(out[i] / mesh.volumes[i])) * mesh.delta_x
}

/// Distance from the support of the initial density to the boundary of the disc.
fn boundary_gap(cfg: &ExperimentConfig) -> f64 {
    let (c0, r0) = (cfg.mesh.center.unwrap_or([0.0, 0.0]), cfg.mesh.radius.unwrap_or(1.0));
    match *cfg.initial.as_ref().unwrap() {
        InitialProfile::Bump { center, radius } | InitialProfile::Disc { center, radius } => {
            (r0 - geom::dist(center, c0) - radius).max(0.0)
        }
        _ => 0.0,
    }
}

fn coupled(cfg: &ExperimentConfig, arts: &mut Artifacts, measured: &mut Measured) -> Result<(), RunError> {
    let nl = cfg.coupling.nonlinearity;
    let gf = move |u: f64| nl.eval(u);
    let g = Nonlinearity { g: &gf, lipschitz: nl.lipschitz() };
    g.check(1.0).map_err(config_if_param)?;
    let t_end = cfg.t_end.unwrap_or(0.5);
    let mut hs = levels(cfg);
    let primary = primary_h(cfg);
    if cfg.mesh.generator == MeshGenerator::File {
        hs = vec![primary];
    } else if !hs.contains(&primary) {
        hs.push(primary);
    }
    let mut samples = vec![];
    let mut per_level = vec![];
    let mut res = Ok(());
    for &h in &hs {
        let step = (|| {
            let mesh = build_mesh(&cfg.mesh, h)?;
            let space = P1Space::new(&mesh)?;
            let u0 = initial_density(&mesh, cfg.initial.as_ref().unwrap(), &cfg.quadrature)?;
            let tr = coupled_run(&mesh, &space, u0, &g, t_end, &cfg.stepper, cfg.coupling.mode)?;
            Ok::<_, RunError>((mesh, tr))
        })();
        let (mesh, tr) = match step {
            Ok(v) => v,
            Err(e) => {
                res = Err(e);
                break;
            }
        };
        if h == primary {
            arts.write("coupled.csv", |w| Ok(write_coupled_csv(&tr, w)?))?;
        }
        let m0 = tr.records[0].mass;
        let mass_drift = tr.records.iter().fold(0.0f64, |a, r| a.max((r.mass - m0).abs()));
        let div_err = tr.records.iter().fold(0.0f64, |a, r| a.max(r.divergence_error));
        let var_res = tr.records.iter().fold(0.0f64, |a, r| a.max(r.variational_residual));
        let last = tr.records.last().unwrap();
        let m_lambda = outflow_rate(&mesh, &tr.last.coeffs);
        samples.push(LeakSample { delta_x: mesh.delta_x, leak: last.leak_total, m_lambda });
        per_level.push(json!({
            "h": h,
            "mesh": mesh_summary(&mesh),
            "steps": tr.records.len() - 1,
            "mass_drift": mass_drift,
            "max_divergence_identity_error": div_err,
            "max_variational_residual": var_res,
            "leak_total": last.leak_total,
            "potential_range": [last.potential_min, last.potential_max],
            "div_sup": last.div_sup,
            "m_lambda": m_lambda,
        }));
    }
    arts.write("leak.csv", |w| {
        writeln!(w, "delta_x,leak,m_lambda").map_err(io_err)?;
        samples.iter().try_for_each(|s| writeln!(w, "{:e},{:e},{:e}", s.delta_x, s.leak, s.m_lambda)).map_err(io_err)
    })?;
    measured.put("levels", per_level);
    if !samples.is_empty() {
        measured.put("leak_bound", leak_bound_check(&samples, boundary_gap(cfg), t_end));
    }
    res
}
