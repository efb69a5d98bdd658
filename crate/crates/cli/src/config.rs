//! TOML experiment configuration.
//!
//! ```toml
//! [domain]
//! kind = "eccentric_annulus"
//! r_in = 0.4
//! r_out = 1.0
//! offset = 0.25
//! h = 0.03
//!
//! [potential]
//! kind = "quartic"
//!
//! [problem]
//! mode = "neumann"
//! m_fraction = 0.01
//!
//! [solver]
//! n_seeds = 32
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use acmc_core::construction::Caps;
use acmc_core::energy::BoundaryCondition;
use acmc_core::mesh::{build_domain, io, DomainKind, DomainMesh, DomainSpec};
use acmc_core::potential::{make_potential, PotentialKind, PotentialSpec};
use acmc_core::solver::SolveConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending field, when known.
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "config error in `{field}`: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSection,
    #[serde(default)]
    pub potential: PotentialSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSection {
    UnitDisk {
        h: f64,
    },
    Annulus {
        r_in: f64,
        r_out: f64,
        h: f64,
    },
    EccentricAnnulus {
        r_in: f64,
        r_out: f64,
        offset: f64,
        h: f64,
    },
    Rectangle {
        width: f64,
        height: f64,
        h: f64,
    },
    /// Plain-text mesh; `h` defaults to the longest edge.
    MeshFile {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default = "quartic")]
    pub kind: PotentialKind,
    #[serde(default = "one")]
    pub scale: f64,
}

fn quartic() -> PotentialKind {
    PotentialKind::Quartic
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Quartic,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub mode: BoundaryCondition,
    /// Absolute mass; exclusive with `m_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_fraction: Option<f64>,
    /// Defaults to the epsilon cap for `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Sweep for `profile` and `gamma-check`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// Masses for `isoperimetric`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    /// Explicit points for `photograph` and `solve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
}

/// Overrides of the solver defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_l2_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_energy_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_barycenter_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_cap_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_cap_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_step_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_centers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write per-field CSV and SVG files.
    #[serde(default = "yes")]
    pub fields: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, fields: true }
    }
}

/// Where the mesh comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Spec(DomainSpec),
    File { path: PathBuf, h: Option<f64>, text: String },
}

/// A validated configuration with every derived quantity filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub source: MeshSource,
    pub area: f64,
    pub potential: PotentialSpec,
    pub solve: SolveConfig,
    pub epsilons: Vec<f64>,
    pub masses: Vec<f64>,
    pub points: Option<Vec<[f64; 2]>>,
    pub write_fields: bool,
}

impl MeshSource {
    pub fn build(&self) -> acmc_core::Result<DomainMesh> {
        match self {
            MeshSource::Spec(spec) => build_domain(spec),
            MeshSource::File { text, h, .. } => {
                let mut mesh = io::read_mesh(text, h.unwrap_or(0.0))?;
                if h.is_none() {
                    mesh.h = longest_edge(&mesh);
                }
                Ok(mesh)
            }
        }
    }
}

fn longest_edge(mesh: &DomainMesh) -> f64 {
    mesh.triangles
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
        .map(|(a, b)| acmc_core::geom::dist(mesh.nodes[a], mesh.nodes[b]))
        .fold(0.0, f64::max)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            field: None,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    /// Checks every field and derives mass, epsilon and the solver settings.
    /// Relative mesh paths are taken relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved, ConfigError> {
        let source = self.domain.source(base)?;
        let area = match &source {
            MeshSource::Spec(spec) => spec.geometry().area(),
            MeshSource::File { .. } => source
                .build()
                .map_err(|e| ConfigError::at("domain.path", e.to_string()))?
                .area,
        };

        let pot = &self.potential;
        positive("potential.scale", pot.scale)?;
        let potential =
            make_potential(pot.kind, pot.scale).map_err(|e| ConfigError::at("potential", e.to_string()))?;

        let p = &self.problem;
        let m = match (p.m, p.m_fraction) {
            (Some(m), None) => {
                positive("problem.m", m)?;
                m
            }
            (None, Some(f)) => {
                positive("problem.m_fraction", f)?;
                f * area
            }
            (None, None) => return Err(ConfigError::at("problem.m", "one of `m` or `m_fraction` is required")),
            (Some(_), Some(_)) => {
                return Err(ConfigError::at("problem.m_fraction", "give either `m` or `m_fraction`, not both"))
            }
        };
        if m >= area {
            return Err(ConfigError::at("problem.m", format!("mass {m} must be below the area {area}")));
        }

        let s = &self.solver;
        let mut caps = Caps::default();
        if let Some(v) = s.m_cap_fraction {
            positive("solver.m_cap_fraction", v)?;
            caps.m_fraction = v;
        }
        if let Some(v) = s.eps_cap_factor {
            positive("solver.eps_cap_factor", v)?;
            caps.eps_factor = v;
        }
        let epsilon = match p.epsilon {
            Some(e) => {
                positive("problem.epsilon", e)?;
                e
            }
            None => caps.epsilon_cap(m),
        };
        let epsilons = match &p.epsilons {
            Some(list) => {
                if list.is_empty() {
                    return Err(ConfigError::at("problem.epsilons", "list is empty"));
                }
                for &e in list {
                    positive("problem.epsilons", e)?;
                }
                list.clone()
            }
            None => vec![epsilon],
        };
        let masses = match &p.masses {
            Some(list) => {
                if list.is_empty() {
                    return Err(ConfigError::at("problem.masses", "list is empty"));
                }
                for &x in list {
                    positive("problem.masses", x)?;
                    if x >= area {
                        return Err(ConfigError::at("problem.masses", format!("mass {x} must be below the area {area}")));
                    }
                }
                list.clone()
            }
            None => vec![m],
        };
        caps.validate(area, m, epsilon).map_err(|e| {
            let field = if m > caps.m_fraction * area { "problem.m" } else { "problem.epsilon" };
            ConfigError::at(field, e.to_string())
        })?;

        let mut solve = SolveConfig::new(epsilon, m, p.mode);
        solve.caps = caps;
        s.apply(&mut solve)?;
        solve
            .validate(area)
            .map_err(|e| ConfigError::at("solver", e.to_string()))?;

        Ok(Resolved {
            source,
            area,
            potential,
            solve,
            epsilons,
            masses,
            points: p.points.clone(),
            write_fields: self.output.fields,
        })
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::at(field, format!("must be a positive number, got {v}")))
    }
}

fn positive_count(field: &str, v: usize) -> Result<(), ConfigError> {
    if v > 0 {
        Ok(())
    } else {
        Err(ConfigError::at(field, "must be at least 1"))
    }
}

impl DomainSection {
    fn source(&self, base: &Path) -> Result<MeshSource, ConfigError> {
        let kind = match *self {
            DomainSection::UnitDisk { h } => {
                positive("domain.h", h)?;
                DomainSpec::unit_disk(h)
            }
            DomainSection::Annulus { r_in, r_out, h } => {
                positive("domain.r_in", r_in)?;
                positive("domain.r_out", r_out)?;
                positive("domain.h", h)?;
                DomainSpec::annulus(r_in, r_out, h)
            }
            DomainSection::EccentricAnnulus { r_in, r_out, offset, h } => {
                positive("domain.r_in", r_in)?;
                positive("domain.r_out", r_out)?;
                if !offset.is_finite() {
                    return Err(ConfigError::at("domain.offset", "must be finite"));
                }
                positive("domain.h", h)?;
                DomainSpec::eccentric_annulus(r_in, r_out, offset, h)
            }
            DomainSection::Rectangle { width, height, h } => {
                positive("domain.width", width)?;
                positive("domain.height", height)?;
                positive("domain.h", h)?;
                DomainSpec::rectangle(width, height, h)
            }
            DomainSection::MeshFile { ref path, h } => {
                if let Some(h) = h {
                    positive("domain.h", h)?;
                }
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| ConfigError::at("domain.path", format!("cannot read {}: {e}", full.display())))?;
                return Ok(MeshSource::File { path: full, h, text });
            }
        };
        kind.validate().map_err(|e| {
            let field = match kind.kind {
                DomainKind::UnitDisk => "domain.h",
                _ => "domain",
            };
            ConfigError::at(field, e.to_string())
        })?;
        Ok(MeshSource::Spec(kind))
    }
}

impl SolverSection {
    fn apply(&self, cfg: &mut SolveConfig) -> Result<(), ConfigError> {
        macro_rules! real {
            ($name:ident) => {
                if let Some(v) = self.$name {
                    positive(concat!("solver.", stringify!($name)), v)?;
                    cfg.$name = v;
                }
            };
        }
        macro_rules! count {
            ($name:ident) => {
                if let Some(v) = self.$name {
                    positive_count(concat!("solver.", stringify!($name)), v)?;
                    cfg.$name = v;
                }
            };
        }
        if let Some(v) = self.dt {
            positive("solver.dt", v)?;
            cfg.dt = Some(v);
        }
        count!(flow_max_steps);
        real!(stall_tol);
        real!(flow_residual_tol);
        real!(newton_tol);
        count!(newton_max_iter);
        count!(refine_rounds);
        for (name, src, dst) in [
            ("solver.dedup_l2_tol", self.dedup_l2_tol, &mut cfg.dedup_l2_tol),
            ("solver.dedup_energy_tol", self.dedup_energy_tol, &mut cfg.dedup_energy_tol),
            ("solver.dedup_barycenter_tol", self.dedup_barycenter_tol, &mut cfg.dedup_barycenter_tol),
        ] {
            if let Some(v) = src {
                positive(name, v)?;
                *dst = Some(v);
            }
        }
        count!(n_seeds);
        real!(gamma_hat);
        real!(dirichlet_slack);
        real!(mu_hat);
        real!(alpha);
        real!(degeneracy_tol);
        real!(profile_step_tol);
        count!(profile_centers);
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISK: &str = r#"
[domain]
kind = "unit_disk"
h = 0.05

[problem]
mode = "neumann"
m = 0.01
"#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = ExperimentConfig::from_toml(DISK).unwrap();
        let r = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(r.solve.m, 0.01);
        assert!((r.solve.epsilon - 0.1 * (0.01 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(r.epsilons, vec![r.solve.epsilon]);
        assert_eq!(r.potential.kind, PotentialKind::Quartic);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = DISK.replace("m = 0.01", "m = 0.01\nepsilon = -1.0");
        let e = ExperimentConfig::from_toml(&bad).unwrap().resolve(Path::new(".")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("problem.epsilon"));

        let e = ExperimentConfig::from_toml(&DISK.replace("h = 0.05", "h = 0.05\nradius = 2"))
            .unwrap_err();
        assert!(e.message.contains("radius"), "{e}");

        let capped = DISK.replace("m = 0.01", "m = 0.01\nepsilon = 0.5");
        let e = ExperimentConfig::from_toml(&capped).unwrap().resolve(Path::new(".")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("problem.epsilon"));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::from_toml(DISK).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&toml_text).unwrap(), cfg);
    }
}
