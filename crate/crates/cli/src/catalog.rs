//! Built-in meshes, fields and experiments, in text and JSON form.

use serde::{Deserialize, Serialize};

use upwind_core::coupling::CouplingMode;
use upwind_core::discretize::QuadratureSpec;
use upwind_core::fields::{field_catalog, FieldEntry, FieldSpec};
use upwind_core::upwind::StepperSpec;

use crate::config::{
    CellFunctions, CouplingConfig, ExperimentConfig, ExperimentKind, InitialProfile, MeshConfig, MeshGenerator,
    NonlinearityConfig, SemiNormConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshEntry {
    /// Value of `mesh.generator`.
    pub id: String,
    pub parameters: Vec<String>,
    pub description: String,
    /// Whether the mesh carries a periodic pattern (needed for virtual coordinates).
    pub periodic: bool,
    pub example: MeshConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    /// Value of `experiment`.
    pub id: String,
    pub description: String,
    pub artifacts: Vec<String>,
    pub example: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Catalog {
    pub version: String,
    pub meshes: Vec<MeshEntry>,
    pub fields: Vec<FieldEntry>,
    pub experiments: Vec<ExperimentEntry>,
}

fn mesh_example(generator: MeshGenerator, h: f64) -> MeshConfig {
    MeshConfig {
        generator,
        h: Some(h),
        path: None,
        domain: None,
        center: None,
        radius: None,
        cells: None,
        mollify_radius: None,
        halo: None,
        refinements: None,
    }
}

fn experiment_example(kind: ExperimentKind) -> ExperimentConfig {
    let generator = match kind {
        ExperimentKind::Coupled => MeshGenerator::Disc,
        ExperimentKind::Advect => MeshGenerator::Cartesian,
        _ => MeshGenerator::Alternating,
    };
    let mut cfg = ExperimentConfig {
        experiment: kind,
        seed: 0,
        output_dir: None,
        mesh: mesh_example(generator, 1.0 / 16.0),
        field: None,
        initial: None,
        seminorm: SemiNormConfig::default(),
        stepper: StepperSpec::default(),
        quadrature: QuadratureSpec::default(),
        t_end: None,
        s_grid: None,
        directions: None,
        walkers: 0,
        coupling: CouplingConfig::default(),
    };
    match kind {
        ExperimentKind::Advect => {
            cfg.field = Some(FieldSpec::Rotation { omega: 1.0, center: [0.5, 0.5] });
            cfg.initial = Some(InitialProfile::Bump { center: [0.5, 0.72], radius: 0.18 });
            cfg.t_end = Some(0.5);
            cfg.stepper.output_interval = Some(0.25);
        }
        ExperimentKind::Example16 => {
            cfg.mesh.refinements = Some(vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]);
            cfg.s_grid = Some(vec![0.3, 0.4, 0.5, 0.6, 0.7]);
        }
        ExperimentKind::VcoordsScan => {
            cfg.mesh.generator = MeshGenerator::Cartesian;
            cfg.directions = Some(64);
        }
        ExperimentKind::SeminormPropagation => {
            cfg.mesh.refinements = Some(vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
        }
        ExperimentKind::ResidueDecay => {
            cfg.mesh.cells = Some(CellFunctions::Sharp);
            cfg.mesh.refinements = Some(vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
        }
        ExperimentKind::Coupled => {
            cfg.mesh.h = Some(1.0 / 24.0);
            cfg.mesh.refinements = Some(vec![1.0 / 12.0, 1.0 / 24.0]);
            cfg.coupling = CouplingConfig { nonlinearity: NonlinearityConfig::Saturating { kappa: 1.0 }, mode: CouplingMode::PerStep };
        }
    }
    cfg
}

fn experiment_entry(kind: ExperimentKind) -> ExperimentEntry {
    let (description, artifacts): (&str, &[&str]) = match kind {
        ExperimentKind::Advect => (
            "advect an initial density with the upwind scheme",
            &["trajectory.csv", "seminorm.csv", "monte_carlo.csv (walkers > 0)", "summary.json"],
        ),
        ExperimentKind::Example16 => (
            "advect a plateau on alternating meshes and compare fractional Sobolev norms across h",
            &["fractional.csv", "summary.json"],
        ),
        ExperimentKind::VcoordsScan => (
            "virtual coordinates over a direction grid with per-cell constant-field residues",
            &["residue.csv", "summary.json"],
        ),
        ExperimentKind::SeminormPropagation => (
            "log-scale semi-norm scans at t = 0 and t = T across refinements",
            &["seminorm.csv", "summary.json"],
        ),
        ExperimentKind::ResidueDecay => (
            "constant-field residues of barycenters and of virtual coordinates across refinements",
            &["residue_decay.csv", "summary.json"],
        ),
        ExperimentKind::Coupled => (
            "transport by the gradient of a P1 Poisson potential sourced by g(u), with a leak study",
            &["coupled.csv", "leak.csv", "summary.json"],
        ),
    };
    ExperimentEntry {
        id: kind.name().into(),
        description: description.into(),
        artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        example: experiment_example(kind),
    }
}

pub fn catalog() -> Catalog {
    let mesh = |id: &str, params: &[&str], description: &str, periodic: bool, generator: MeshGenerator, h: f64| MeshEntry {
        id: id.into(),
        parameters: params.iter().map(|s| s.to_string()).collect(),
        description: description.into(),
        periodic,
        example: mesh_example(generator, h),
    };
    let polygon = ["h", "domain", "cells", "mollify_radius", "halo"];
    Catalog {
        version: upwind_core::VERSION.into(),
        meshes: vec![
            mesh("cartesian", &polygon, "squares of side h", true, MeshGenerator::Cartesian, 1.0 / 16.0),
            mesh(
                "alternating",
                &polygon,
                "rows of height h whose cells alternate between width h and width h/2 from one row to the next",
                true,
                MeshGenerator::Alternating,
                1.0 / 16.0,
            ),
            mesh("hexagonal", &polygon, "regular hexagons of side h", true, MeshGenerator::Hexagonal, 1.0 / 16.0),
            mesh(
                "disc",
                &["h", "center", "radius"],
                "triangulated disc with rings about h apart and hat-function cells",
                false,
                MeshGenerator::Disc,
                1.0 / 16.0,
            ),
        ],
        fields: field_catalog(),
        experiments: ExperimentKind::ALL.iter().map(|&k| experiment_entry(k)).collect(),
    }
}

pub fn catalog_json() -> String {
    serde_json::to_string_pretty(&catalog()).expect("the catalog serializes")
}

pub fn catalog_text() -> String {
    let c = catalog();
    let mut s = format!("upwind {}\n\nmeshes (mesh.generator):\n", c.version);
    for m in &c.meshes {
        let tag = if m.periodic { " (periodic)" } else { "" };
        s += &format!("  {:<12} parameters: {}\n      {}{}\n", m.id, m.parameters.join(", "), m.description, tag);
    }
    s += "  file         parameters: path\n      JSON mesh file (polygon or triangulation)\n\nfields (field.type):\n";
    for f in &c.fields {
        let params = if f.parameters.is_empty() { "none".to_string() } else { f.parameters.join(", ") };
        s += &format!("  {:<14} parameters: {}\n      regularity: {}\n", f.id, params, f.regularity);
    }
    s += "\nexperiments (experiment):\n";
    for e in &c.experiments {
        s += &format!("  {:<20} {}\n      artifacts: {}\n", e.id, e.description, e.artifacts.join(", "));
    }
    s
}
