//! The JSON run configuration shared by every subcommand.
//!
//! Unknown keys are rejected at every level. Each subcommand reads only the
//! sections it needs and fails with a message naming the missing or invalid
//! key.

use std::path::{Path, PathBuf};

use fastslow_core::coeffs::CoefficientModel;
use fastslow_core::io::read_gamma_csv;
use fastslow_core::micro::averaging::MapObservable;
use fastslow_core::micro::{BumpPotential, MicroBackend};
use fastslow_core::topology::{GraphDocument, InteractionGraph};
use fastslow_core::verify::suite::{CompareSection, GammaSection, SuiteConfig};
use serde::{Deserialize, Serialize};

/// A configuration problem; always maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("config error at `{key}`: {msg}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete { n: usize },
    Chain { n: usize },
    /// Box `∏ [lo_i, hi_i)` of the cubic lattice `ℤ^dim`.
    Lattice { region: Vec<[i64; 2]> },
    Explicit { vertices: Vec<i64>, edges: Vec<[i64; 2]> },
    /// Path to a graph JSON document, relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub amplitude: f64,
    pub dim: u32,
    /// Empirical `tau,gamma[,stderr]` CSV, relative to the config file.
    /// Replaces the closed-form curve when present.
    pub gamma_table: Option<PathBuf>,
    pub slope_at_zero: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            dim: 3,
            gamma_table: None,
            slope_at_zero: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogCoordinates {
    pub cutoff_delta: f64,
    #[serde(default = "yes")]
    pub project: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    pub initial: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub delta_stop: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    #[serde(default = "default_rel_change")]
    pub max_rel_change: Option<f64>,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub log_coordinates: Option<LogCoordinates>,
}

fn one() -> usize {
    1
}

fn default_halvings() -> u32 {
    fastslow_core::sde::DEFAULT_MAX_HALVINGS
}

fn default_rel_change() -> Option<f64> {
    Some(fastslow_core::sde::DEFAULT_MAX_REL_CHANGE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSection {
    pub initial: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    /// Rescaled horizon; the physical horizon is `t_end/ε²`.
    pub t_end: f64,
    #[serde(default)]
    pub physical_time: Option<f64>,
    #[serde(default = "default_backend")]
    pub backend: MicroBackend,
    #[serde(default)]
    pub potential: BumpPotential,
    #[serde(default = "default_micro_step")]
    pub step: f64,
    #[serde(default)]
    pub record_interval: Option<f64>,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub max_hamiltonian_drift: Option<f64>,
}

fn default_backend() -> MicroBackend {
    MicroBackend::Hyperbolic
}

fn default_micro_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaCli {
    pub observable: MapObservable,
    pub lag_max: usize,
    pub ensemble: usize,
    /// Birkhoff-sum oracle; skipped when either is zero.
    pub oracle_steps: u64,
    pub oracle_orbits: usize,
}

impl Default for SigmaCli {
    fn default() -> Self {
        Self {
            observable: MapObservable::Cosine,
            lag_max: 30,
            ensemble: 200_000,
            oracle_steps: 0,
            oracle_orbits: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub sde: Option<SdeSection>,
    #[serde(default)]
    pub micro: Option<MicroSection>,
    #[serde(default)]
    pub gamma: Option<GammaSection>,
    #[serde(default)]
    pub sigma: Option<SigmaCli>,
    #[serde(default)]
    pub verify: Option<SuiteConfig>,
    #[serde(default)]
    /// Uses `model.gamma_table` when present, else estimates `Γ̂` from the
    /// `gamma` section.
    pub compare: Option<CompareSection>,
}

/// A parsed configuration with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: FileConfig,
    pub base_dir: PathBuf,
}

/// The verification suite shipped with the repository.
pub const DEFAULT_VERIFY_CONFIG: &str = include_str!("../../../configs/verify.json");

pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig, ConfigError> {
    let file: FileConfig = serde_json::from_str(text).map_err(|e| ConfigError(format!("config error: {e}")))?;
    let cfg = LoadedConfig {
        file,
        base_dir: base_dir.to_path_buf(),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

fn check_energies(key: &str, e: &[f64]) -> Result<(), ConfigError> {
    if e.is_empty() {
        return Err(err(key, "at least one energy is required"));
    }
    for (i, &v) in e.iter().enumerate() {
        if !(v.is_finite() && v > 0.0) {
            return Err(err(
                &format!("{key}[{i}]"),
                format!("initial energies must be strictly positive (E_x > 0), got {v}"),
            ));
        }
    }
    Ok(())
}

fn check_positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(err(key, format!("must be finite and > 0, got {v}")))
    }
}

fn check_delta(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(err(key, format!("must lie in (0, 1), got {v}")))
    }
}

impl LoadedConfig {
    /// Range checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.file;
        if f.workers == Some(0) {
            return Err(err("workers", "must be >= 1"));
        }
        if let Some(m) = &f.model {
            check_positive("model.amplitude", m.amplitude)?;
            if m.dim < 2 {
                return Err(err("model.dim", "must be >= 2"));
            }
        }
        if let Some(s) = &f.sde {
            check_energies("sde.initial", &s.initial)?;
            check_positive("sde.t_end", s.t_end)?;
            if let Some(dt) = s.dt {
                check_positive("sde.dt", dt)?;
            }
            if !(s.delta_stop >= 0.0) {
                return Err(err("sde.delta_stop", "must be >= 0"));
            }
            if s.record_stride == 0 || s.ensemble == 0 {
                return Err(err("sde.ensemble", "ensemble and record_stride must be >= 1"));
            }
            if let Some(l) = &s.log_coordinates {
                check_delta("sde.log_coordinates.cutoff_delta", l.cutoff_delta)?;
            }
        }
        if let Some(m) = &f.micro {
            check_energies("micro.initial", &m.initial)?;
            if !(m.epsilon > 0.0 || (m.epsilon == 0.0 && m.physical_time.is_some())) {
                return Err(err(
                    "micro.epsilon",
                    format!("must be > 0 (or 0 with micro.physical_time), got {}", m.epsilon),
                ));
            }
            check_delta("micro.delta", m.delta)?;
            check_positive("micro.t_end", m.t_end)?;
            check_positive("micro.step", m.step)?;
            if m.ensemble == 0 {
                return Err(err("micro.ensemble", "must be >= 1"));
            }
        }
        if let Some(c) = &f.compare {
            check_energies("compare.initial", &c.initial)?;
            check_delta("compare.delta", c.delta)?;
            for (i, &e) in c.epsilons.iter().enumerate() {
                check_positive(&format!("compare.epsilons[{i}]"), e)?;
            }
        }
        if let Some(g) = &f.gamma {
            check_positive("gamma.tau_min", g.tau_min)?;
            if !(g.tau_max > g.tau_min) {
                return Err(err("gamma.tau_max", "must exceed gamma.tau_min"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn graph(&self) -> Result<InteractionGraph, ConfigError> {
        let spec = self.file.graph.as_ref().ok_or_else(|| err("graph", "missing section"))?;
        let g = match spec {
            GraphSpec::Complete { n } => InteractionGraph::complete(*n),
            GraphSpec::Chain { n } => InteractionGraph::chain(*n),
            GraphSpec::Lattice { region } => {
                let r: Vec<_> = region.iter().map(|[a, b]| *a..*b).collect();
                InteractionGraph::lattice_region(r.len(), &r)
            }
            GraphSpec::Explicit { vertices, edges } => GraphDocument {
                vertices: vertices.clone(),
                edges: edges.clone(),
            }
            .to_graph(),
            GraphSpec::File { path } => fastslow_core::io::read_graph_json(&self.resolve(path)),
        };
        g.map_err(|e| err("graph", e))
    }

    pub fn model(&self) -> Result<CoefficientModel, ConfigError> {
        let m = self.file.model.clone().unwrap_or_default();
        let model = match &m.gamma_table {
            Some(p) => read_gamma_csv(&self.resolve(p))
                .and_then(|t| CoefficientModel::from_table(t, m.dim))
                .map_err(|e| err("model.gamma_table", e))?,
            None => CoefficientModel::analytic(m.amplitude, m.dim).map_err(|e| err("model", e))?,
        };
        match m.slope_at_zero {
            Some(s) if s.is_finite() => Ok(model.with_slope_at_zero(s)),
            Some(_) => Err(err("model.slope_at_zero", "must be finite")),
            None => Ok(model),
        }
    }

    pub fn require<'a, T>(&self, section: &'a Option<T>, key: &str) -> Result<&'a T, ConfigError> {
        section.as_ref().ok_or_else(|| err(key, "missing section"))
    }
}
