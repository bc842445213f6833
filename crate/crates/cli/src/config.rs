//! Experiment configuration: parsing, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use upwind_core::coupling::CouplingMode;
use upwind_core::discretize::QuadratureSpec;
use upwind_core::fields::FieldSpec;
use upwind_core::geom::Vec2;
use upwind_core::seminorm::SemiNormParams;
use upwind_core::upwind::StepperSpec;

/// Invalid or inconsistent configuration (exit status 2).
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Advect an initial profile and record the trajectory.
    Advect,
    /// Fractional norms of an advected plateau on alternating meshes.
    Example16,
    /// Virtual coordinates and residues over a direction grid.
    VcoordsScan,
    /// Log-scale semi-norm before and after advection across refinements.
    SeminormPropagation,
    /// Barycentric against virtual-coordinate residues across refinements.
    ResidueDecay,
    /// Transport coupled to a Poisson potential on a disc.
    Coupled,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Advect,
        ExperimentKind::Example16,
        ExperimentKind::VcoordsScan,
        ExperimentKind::SeminormPropagation,
        ExperimentKind::ResidueDecay,
        ExperimentKind::Coupled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Advect => "advect",
            ExperimentKind::Example16 => "example16",
            ExperimentKind::VcoordsScan => "vcoords-scan",
            ExperimentKind::SeminormPropagation => "seminorm-propagation",
            ExperimentKind::ResidueDecay => "residue-decay",
            ExperimentKind::Coupled => "coupled",
        }
    }

    fn uses_refinements(self) -> bool {
        matches!(
            self,
            ExperimentKind::Example16
                | ExperimentKind::SeminormPropagation
                | ExperimentKind::ResidueDecay
                | ExperimentKind::Coupled
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshGenerator {
    /// Axis-aligned squares of side h.
    Cartesian,
    /// Rows of squares with alternating offsets, periodic pattern of width h.
    Alternating,
    /// Regular hexagons of side h.
    Hexagonal,
    /// Triangulated disc with ring spacing about h, hat-function cells.
    Disc,
    /// Mesh read from a JSON mesh file.
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFunctions {
    /// Indicator functions of the polygons.
    Sharp,
    /// Indicators mollified at radius `mollify_radius`·δx.
    Mollified,
}

/// Where the mesh comes from and how its cell functions are built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub generator: MeshGenerator,
    /// Mesh parameter h (cell side, pattern width or ring spacing).
    #[serde(default)]
    pub h: Option<f64>,
    /// Mesh file, required for the `file` generator.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Rectangle `[lo, hi]` of polygon generators.
    #[serde(default)]
    pub domain: Option<[Vec2; 2]>,
    /// Disc centre and radius of the `disc` generator.
    #[serde(default)]
    pub center: Option<Vec2>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub cells: Option<CellFunctions>,
    /// Mollification radius in units of δx.
    #[serde(default)]
    pub mollify_radius: Option<f64>,
    /// Width of the halo of frozen cells, in units of δx.
    #[serde(default)]
    pub halo: Option<f64>,
    /// Mesh parameters of a refinement study; defaults depend on the experiment.
    #[serde(default)]
    pub refinements: Option<Vec<f64>>,
}

/// Initial density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// (1 − |x − c|²/r²)³ inside the disc of radius r.
    Bump { center: Vec2, radius: f64 },
    /// 1 on interior cells whose barycenter has x₁ ∈ (x_min, x_max).
    Plateau { x_min: f64, x_max: f64 },
    /// Indicator of the disc of radius r, cell-averaged.
    Disc { center: Vec2, radius: f64 },
    Constant { value: f64 },
}

/// Source nonlinearity g of the coupled system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    /// g(u) = κu/(1 + u), Lipschitz constant |κ|.
    Saturating { kappa: f64 },
    /// g(u) = κu.
    Linear { kappa: f64 },
    /// g ≡ 0.
    Zero,
}

impl NonlinearityConfig {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            NonlinearityConfig::Saturating { kappa } => kappa * u / (1.0 + u),
            NonlinearityConfig::Linear { kappa } => kappa * u,
            NonlinearityConfig::Zero => 0.0,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            NonlinearityConfig::Saturating { kappa } | NonlinearityConfig::Linear { kappa } => kappa.abs(),
            NonlinearityConfig::Zero => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub mode: CouplingMode,
}

fn default_nonlinearity() -> NonlinearityConfig {
    NonlinearityConfig::Saturating { kappa: 1.0 }
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig { nonlinearity: default_nonlinearity(), mode: CouplingMode::default() }
    }
}

/// Semi-norm parameters with defaults h₀ = 1/4, p = 1, θ = 1 and 24 widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiNormConfig {
    pub h0: f64,
    pub p: f64,
    pub theta: f64,
    pub n_h: usize,
}

impl Default for SemiNormConfig {
    fn default() -> Self {
        SemiNormConfig { h0: 0.25, p: 1.0, theta: 1.0, n_h: 24 }
    }
}

impl SemiNormConfig {
    pub fn params(&self) -> Result<SemiNormParams, ConfigError> {
        let p = SemiNormParams { h0: self.h0, p: self.p, theta: self.theta, n_h: self.n_h, p_star: None };
        p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(p)
    }
}

/// A complete experiment definition. After [`ExperimentConfig::resolve`] every
/// optional field is filled in, and the resolved value is what summaries embed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub initial: Option<InitialProfile>,
    #[serde(default)]
    pub seminorm: SemiNormConfig,
    #[serde(default)]
    pub stepper: StepperSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Fractional orders of the example16 experiment.
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
    /// Size of the direction grid for virtual coordinates.
    #[serde(default)]
    pub directions: Option<usize>,
    /// Monte Carlo walkers for the advect experiment (0 disables the oracle).
    #[serde(default)]
    pub walkers: usize,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Read a TOML file; a `.json` extension selects JSON.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        // relative mesh paths are taken relative to the config file
        if let (Some(p), Some(dir)) = (&cfg.mesh.path, path.parent()) {
            if p.is_relative() && !dir.as_os_str().is_empty() {
                cfg.mesh.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    /// Fill experiment-dependent defaults and validate every parameter.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let kind = self.experiment;
        let m = &mut self.mesh;
        match m.generator {
            MeshGenerator::File => {
                let Some(p) = &m.path else { return invalid("the file generator needs `path`") };
                if !p.is_file() {
                    return invalid(format!("mesh file {} does not exist", p.display()));
                }
                if m.refinements.as_ref().is_some_and(|r| r.len() > 1) {
                    return invalid("a mesh file cannot be refined");
                }
            }
            _ => {
                if m.path.is_some() {
                    return invalid("`path` is only used by the file generator");
                }
                let h = *m.h.get_or_insert(1.0 / 16.0);
                if m.refinements.is_none() && kind.uses_refinements() {
                    m.refinements = Some(vec![h, h / 2.0, h / 4.0]);
                }
            }
        }
        if m.generator == MeshGenerator::Disc {
            m.center.get_or_insert([0.0, 0.0]);
            let r = *m.radius.get_or_insert(1.0);
            if !(r > 0.0 && r.is_finite()) {
                return invalid("disc radius must be positive");
            }
            if m.domain.is_some() {
                return invalid("the disc generator takes `center` and `radius`, not `domain`");
            }
        } else {
            if m.center.is_some() || m.radius.is_some() {
                return invalid("`center` and `radius` are only used by the disc generator");
            }
            if m.generator != MeshGenerator::File {
                let default = if kind == ExperimentKind::Example16 { [[0.0, 0.0], [3.0, 1.0]] } else { [[0.0, 0.0], [1.0, 1.0]] };
                let [lo, hi] = *m.domain.get_or_insert(default);
                if !(hi[0] > lo[0] && hi[1] > lo[1]) || lo.iter().chain(&hi).any(|v| !v.is_finite()) {
                    return invalid("domain must be [lo, hi] with lo < hi");
                }
            }
        }
        m.cells.get_or_insert(CellFunctions::Sharp);
        let r = *m.mollify_radius.get_or_insert(0.25);
        if !(r > 0.0 && r < 0.5) {
            return invalid("mollify_radius must lie in (0, 1/2)");
        }
        let default_halo = match kind {
            ExperimentKind::Coupled => 0.0,
            _ => 2.0,
        };
        let halo = *m.halo.get_or_insert(default_halo);
        if !(halo >= 0.0 && halo.is_finite()) {
            return invalid("halo must be a nonnegative number of cell widths");
        }
        let hs: Vec<f64> = m.h.into_iter().chain(m.refinements.iter().flatten().copied()).collect();
        if hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return invalid("mesh parameters must be positive");
        }
        if m.refinements.as_ref().is_some_and(|r| r.is_empty()) {
            return invalid("refinements must not be empty");
        }
        if kind == ExperimentKind::Coupled && !matches!(m.generator, MeshGenerator::Disc | MeshGenerator::File) {
            return invalid("the coupled experiment needs a triangulated mesh (disc or file)");
        }
        if matches!(kind, ExperimentKind::VcoordsScan | ExperimentKind::ResidueDecay | ExperimentKind::Example16)
            && m.generator == MeshGenerator::Disc
        {
            return invalid(format!("{} needs a periodic polygon mesh", kind.name()));
        }

        let field = self.field.get_or_insert(match kind {
            ExperimentKind::Example16 => FieldSpec::Constant { value: [1.0, 0.0] },
            ExperimentKind::ResidueDecay | ExperimentKind::VcoordsScan => {
                FieldSpec::Constant { value: [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2] }
            }
            _ => FieldSpec::Rotation { omega: 1.0, center: [0.5, 0.5] },
        });
        field.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if kind == ExperimentKind::ResidueDecay && !matches!(field, FieldSpec::Constant { .. }) {
            return invalid("residue-decay needs a constant field");
        }
        if walker_needs_static(kind, self.walkers) && field.is_time_dependent() {
            return invalid("the Monte Carlo oracle needs a time-independent field");
        }
        self.initial.get_or_insert(match kind {
            ExperimentKind::Example16 => InitialProfile::Plateau { x_min: 0.25, x_max: 0.75 },
            ExperimentKind::Coupled => InitialProfile::Bump { center: [0.1, 0.0], radius: 0.4 },
            _ => InitialProfile::Bump { center: [0.5, 0.72], radius: 0.18 },
        });
        match self.initial.as_ref().unwrap() {
            InitialProfile::Bump { radius, .. } | InitialProfile::Disc { radius, .. } if !(*radius > 0.0) => {
                return invalid("initial radius must be positive")
            }
            InitialProfile::Plateau { x_min, x_max } if !(x_max > x_min) => return invalid("plateau needs x_min < x_max"),
            InitialProfile::Constant { value } if !value.is_finite() => return invalid("initial value must be finite"),
            _ => {}
        }
        let t_end = *self.t_end.get_or_insert(match kind {
            ExperimentKind::Coupled => 0.5,
            _ => 1.0,
        });
        if !(t_end > 0.0 && t_end.is_finite()) {
            return invalid("t_end must be positive");
        }
        let s_grid = self.s_grid.get_or_insert_with(|| vec![0.3, 0.4, 0.5, 0.6, 0.7]);
        if s_grid.is_empty() || s_grid.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return invalid("s_grid entries must lie in (0, 1)");
        }
        let d = *self.directions.get_or_insert(64);
        if d < 4 {
            return invalid("at least 4 directions are needed");
        }
        self.seminorm.params()?;
        let st = &self.stepper;
        if !(st.cfl > 0.0 && st.cfl <= 1.0) {
            return invalid("cfl must lie in (0, 1]");
        }
        if st.dt.is_some_and(|dt| !(dt > 0.0)) || st.output_interval.is_some_and(|o| !(o > 0.0)) {
            return invalid("dt and output_interval must be positive");
        }
        let q = &self.quadrature;
        if q.face_points == 0 || q.cell_points == 0 || q.ball_rings == 0 || q.ball_angles == 0 {
            return invalid("quadrature point counts must be positive");
        }
        if !self.coupling.nonlinearity.lipschitz().is_finite() {
            return invalid("nonlinearity constant must be finite");
        }
        Ok(self)
    }
}

fn walker_needs_static(kind: ExperimentKind, walkers: usize) -> bool {
    kind == ExperimentKind::Advect && walkers > 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves() {
        let cfg = ExperimentConfig::from_toml("experiment = \"advect\"\n[mesh]\ngenerator = \"cartesian\"\nh = 0.125\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.mesh.domain, Some([[0.0, 0.0], [1.0, 1.0]]));
        assert_eq!(cfg.t_end, Some(1.0));
        assert!(cfg.field.is_some() && cfg.initial.is_some());
        // the resolved config is a fixed point
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap().resolve().unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r = ExperimentConfig::from_toml("experiment = \"advect\"\ncolour = 1\n[mesh]\ngenerator = \"cartesian\"\n");
        assert!(matches!(r, Err(ConfigError::Parse(_))));
    }

    #[test]
    fn coupled_needs_triangulation() {
        let cfg = ExperimentConfig::from_toml("experiment = \"coupled\"\n[mesh]\ngenerator = \"alternating\"\n").unwrap();
        assert!(matches!(cfg.resolve(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn partial_stepper_table_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml("experiment = \"advect\"\n[mesh]\ngenerator = \"cartesian\"\n[stepper]\ncfl = 0.25\n").unwrap();
        assert_eq!(cfg.stepper.cfl, 0.25);
        assert_eq!(cfg.stepper.method, StepperSpec::default().method);
    }
}
