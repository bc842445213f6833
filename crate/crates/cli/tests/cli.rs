//! End-to-end runs of the `upwind` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use upwind_cli::catalog::Catalog;
use upwind_cli::config::MeshConfig;
use upwind_cli::ExperimentConfig;
use upwind_core::fields::FieldSpec;
use upwind_core::mesh_core::{build_cartesian_mesh, write_mesh, Domain, MeshFile};

fn upwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upwind")).args(args).output().expect("the binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    upwind(&args)
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

const ADVECT: &str = r#"
experiment = "advect"
seed = 11
t_end = 0.2
walkers = 2000

[mesh]
generator = "alternating"
h = 0.125

[field]
type = "rotation"
omega = 1.0
center = [0.5, 0.5]

[stepper]
output_interval = 0.1
"#;

#[test]
fn same_config_and_seed_give_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "advect.toml", ADVECT);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run_config(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(run_config(&cfg, &b, &["--workers", "1"]).status.success());
    assert!(run_config(&cfg, &c, &["--workers", "3"]).status.success());
    let files = csv_files(&a);
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(names, ["monte_carlo.csv", "seminorm.csv", "trajectory.csv"]);
    for f in &files {
        let name = f.file_name().unwrap();
        let ref_bytes = std::fs::read(f).unwrap();
        assert_eq!(ref_bytes, std::fs::read(b.join(name)).unwrap(), "{name:?} differs between runs");
        assert_eq!(ref_bytes, std::fs::read(c.join(name)).unwrap(), "{name:?} depends on the worker count");
    }
    assert_eq!(summary(&a)["measured"], summary(&b)["measured"]);
}

#[test]
fn seed_flag_overrides_config_and_changes_monte_carlo() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "advect.toml", ADVECT);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_config(&cfg, &a, &[]).status.success());
    assert!(run_config(&cfg, &b, &["--seed", "12"]).status.success());
    assert_eq!(summary(&b)["config"]["seed"], 12);
    assert_eq!(std::fs::read(a.join("trajectory.csv")).unwrap(), std::fs::read(b.join("trajectory.csv")).unwrap());
    assert_ne!(std::fs::read(a.join("monte_carlo.csv")).unwrap(), std::fs::read(b.join("monte_carlo.csv")).unwrap());
}

#[test]
fn summary_embeds_version_and_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "advect.toml", ADVECT);
    let out = tmp.path().join("out");
    assert!(run_config(&cfg, &out, &[]).status.success());
    let s = summary(&out);
    assert_eq!(s["version"], upwind_core::VERSION);
    assert_eq!(s["status"], "ok");
    let resolved: ExperimentConfig = serde_json::from_value(s["config"].clone()).unwrap();
    assert_eq!(resolved.clone().resolve().unwrap(), resolved);
    assert!(resolved.initial.is_some() && resolved.mesh.domain.is_some());
    let m = &s["measured"];
    assert!(m["mesh"]["structural"]["delta_x"].as_f64().unwrap() > 0.0);
    assert!(m["mass_balance_defect"].as_f64().unwrap().abs() < 1e-12);
    assert!(m["leak_total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn vcoords_scan_on_cartesian_has_zero_interior_residues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scan.toml",
        "experiment = \"vcoords-scan\"\ndirections = 16\n[mesh]\ngenerator = \"cartesian\"\nh = 0.125\n",
    );
    let out = tmp.path().join("out");
    assert!(run_config(&cfg, &out, &[]).status.success());
    let text = std::fs::read_to_string(out.join("residue.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("direction,cell_id,x,y,residue_norm"));
    let mut rows = 0;
    for line in lines {
        let r: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(r <= 1e-10, "residue {r} in row {line}");
        rows += 1;
    }
    assert!(rows > 0);
    let m = &summary(&out)["measured"];
    assert!(m["max_interior_residue"].as_f64().unwrap() <= 1e-10);
    assert_eq!(m["m_beta"].as_f64().unwrap(), 0.0);
}

#[test]
fn example16_reports_norms_per_level_and_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ex.toml",
        "experiment = \"example16\"\nt_end = 0.5\n[mesh]\ngenerator = \"alternating\"\nh = 0.125\nrefinements = [0.125, 0.0625]\n",
    );
    let out = tmp.path().join("out");
    assert!(run_config(&cfg, &out, &[]).status.success());
    let text = std::fs::read_to_string(out.join("fractional.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("h,delta_x,s,norm_initial,norm_final"));
    assert_eq!(text.lines().count(), 1 + 2 * 5);
    let growth = summary(&out)["measured"]["fractional_norm_growth"].as_array().unwrap().clone();
    assert_eq!(growth.len(), 5);
    // larger orders grow at least as fast under refinement
    let r: Vec<f64> = growth.iter().map(|g| g["finest_over_coarsest"].as_f64().unwrap()).collect();
    assert!(r.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn catalog_lists_generators_and_rough_field() {
    let out = upwind(&["catalog"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.trim_start().starts_with("alternating")).unwrap();
    assert!(line.contains("parameters: h"));
    let rough = text.lines().position(|l| l.trim_start().starts_with("rough")).unwrap();
    assert!(text.lines().nth(rough + 1).unwrap().contains("W^{1,q}"));
}

#[test]
fn catalog_json_round_trips_through_config_parser() {
    let out = upwind(&["catalog", "--json"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cat: Catalog = serde_json::from_str(&text).unwrap();
    let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_value(&cat).unwrap(), raw);
    assert!(cat.meshes.iter().any(|m| m.id == "alternating" && m.parameters.iter().any(|p| p == "h")));
    assert!(cat.fields.iter().any(|f| f.id == "rough" && f.regularity.contains("W^{1,q}")));
    for m in &raw["meshes"].as_array().unwrap().clone() {
        let mc: MeshConfig = serde_json::from_value(m["example"].clone()).unwrap();
        assert_eq!(serde_json::to_value(&mc).unwrap(), m["example"]);
    }
    for f in &cat.fields {
        let spec: FieldSpec = serde_json::from_value(serde_json::to_value(&f.example).unwrap()).unwrap();
        assert_eq!(spec, f.example);
        spec.validate().unwrap();
    }
    let tmp = tempfile::tempdir().unwrap();
    for e in &cat.experiments {
        let toml_text = e.example.to_toml();
        let back = ExperimentConfig::from_toml(&toml_text).unwrap();
        assert_eq!(back, e.example);
        let path = write_config(tmp.path(), &format!("{}.toml", e.id), &toml_text);
        let resolved = upwind(&["resolve", "--config", path.to_str().unwrap()]);
        assert!(resolved.status.success(), "{}", String::from_utf8_lossy(&resolved.stderr));
        assert_eq!(back.experiment.name(), e.id);
    }
}

#[test]
fn invalid_configs_exit_with_status_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("unknown.toml", "experiment = \"advect\"\nspeed = 3\n[mesh]\ngenerator = \"cartesian\"\n"),
        ("kind.toml", "experiment = \"teleport\"\n[mesh]\ngenerator = \"cartesian\"\n"),
        ("negative.toml", "experiment = \"advect\"\n[mesh]\ngenerator = \"cartesian\"\nh = -0.1\n"),
        ("cfl.toml", "experiment = \"advect\"\n[mesh]\ngenerator = \"cartesian\"\n[stepper]\ncfl = 2.0\n"),
        ("missing.toml", "experiment = \"advect\"\n[mesh]\ngenerator = \"file\"\npath = \"nowhere.json\"\n"),
        ("coupled.toml", "experiment = \"coupled\"\n[mesh]\ngenerator = \"hexagonal\"\n"),
        ("divisible.toml", "experiment = \"advect\"\n[mesh]\ngenerator = \"alternating\"\nh = 0.3\n"),
    ];
    for (name, body) in cases {
        let cfg = write_config(tmp.path(), name, body);
        let o = run_config(&cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    let o = upwind(&["--config", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_and_flushes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    // a mesh file without a periodic block cannot carry virtual coordinates
    let mut pm = build_cartesian_mesh(4, 4, Domain::unit_square()).unwrap();
    pm.tags = None;
    write_mesh(&tmp.path().join("plain.json"), &MeshFile::from_polygon(&pm)).unwrap();
    let cfg = write_config(tmp.path(), "scan.toml", "experiment = \"vcoords-scan\"\n[mesh]\ngenerator = \"file\"\npath = \"plain.json\"\n");
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["status"], "failed");
    assert!(s["error"].as_str().unwrap().contains("periodic"));
    // measurements taken before the failure are kept
    assert!(s["measured"]["mesh"]["cells"].as_u64().unwrap() == 16);
}

#[test]
fn file_mesh_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let pm = build_cartesian_mesh(8, 8, Domain::unit_square()).unwrap();
    write_mesh(&tmp.path().join("grid.json"), &MeshFile::from_polygon(&pm)).unwrap();
    let common = "seed = 1\nt_end = 0.2\n[field]\ntype = \"constant\"\nvalue = [1.0, 0.5]\n";
    let from_file = write_config(tmp.path(), "f.toml", &format!("experiment = \"advect\"\n{common}[mesh]\ngenerator = \"file\"\npath = \"grid.json\"\n"));
    let generated = write_config(tmp.path(), "g.toml", &format!("experiment = \"advect\"\n{common}[mesh]\ngenerator = \"cartesian\"\nh = 0.125\n"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_config(&from_file, &a, &[]).status.success());
    assert!(run_config(&generated, &b, &[]).status.success());
    assert_eq!(std::fs::read(a.join("trajectory.csv")).unwrap(), std::fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn coupled_run_conserves_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "experiment = \"coupled\"\nt_end = 0.2\n[mesh]\ngenerator = \"disc\"\nh = 0.125\nrefinements = [0.25, 0.125]\n[stepper]\ndt = 0.02\n",
    );
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("coupled.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,mass,potential_min,potential_max,div_sup,leak_total"));
    let m = &summary(&out)["measured"];
    for l in m["levels"].as_array().unwrap() {
        assert!(l["mass_drift"].as_f64().unwrap() < 1e-10);
        assert!(l["max_divergence_identity_error"].as_f64().unwrap() < 1e-10);
    }
    assert!(m["leak_bound"]["feasible_t"].as_f64().is_some());
}
