//! Declarative experiment configuration: one JSON document per run,
//! validated and resolved into the numerical objects. Every consumed
//! tunable (including computed defaults) echoes into `meta.json`.

use serde::{Deserialize, Serialize};
use setkkl_core::dynsys::{self, DomainSpec, SystemModel};
use setkkl_core::observer::{NoiseKind, NoiseSpec, ObserverConfig};
use setkkl_core::setvalued::InversionConfig;
use setkkl_core::transform::{
    make_filter_pair, tabulate_image, EigSpec, FilterPair, ImageAtlas, TransformField,
    TransformOpts,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: String,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    pub pair: PairConfig,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub inversion: InversionOverrides,
    #[serde(default)]
    pub observer: Option<ObserverSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_out_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DomainConfig {
    Box { lo: Vec<f64>, hi: Vec<f64>, grid_resolution: usize },
    Ball { center: Vec<f64>, radius: f64, grid_resolution: usize },
    Annulus { center: Vec<f64>, inner: f64, outer: f64, grid_resolution: usize },
}

impl DomainConfig {
    pub fn build(&self) -> Result<DomainSpec, CliError> {
        let spec = match self {
            DomainConfig::Box { lo, hi, grid_resolution } => {
                DomainSpec::new_box(lo.clone(), hi.clone(), *grid_resolution)
            }
            DomainConfig::Ball { center, radius, grid_resolution } => {
                DomainSpec::new_ball(center.clone(), *radius, *grid_resolution)
            }
            DomainConfig::Annulus { center, inner, outer, grid_resolution } => {
                DomainSpec::new_annulus(center.clone(), *inner, *outer, *grid_resolution)
            }
        };
        spec.map_err(|e| CliError::Config(format!("domain: {e}")))
    }
}

/// Eigenvalue entry: a negative real, or `[re, im]` for a conjugate pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EigEntry {
    Real(f64),
    Complex([f64; 2]),
}

impl EigEntry {
    fn to_spec(&self) -> EigSpec {
        match self {
            EigEntry::Real(v) => EigSpec::Real(*v),
            EigEntry::Complex([re, im]) => EigSpec::ComplexPair { re: *re, im: *im },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub n_o: usize,
    pub eigenvalues: Vec<EigEntry>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    pub step: f64,
    pub tol_trunc: f64,
    pub tau: Option<f64>,
    /// Cutoff radii; defaults derive from the domain's enclosing radius.
    pub r_keep: Option<f64>,
    pub r_zero: Option<f64>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self { step: 1e-3, tol_trunc: 1e-6, tau: None, r_keep: None, r_zero: None }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionOverrides {
    pub residual_tol: Option<f64>,
    pub cluster_radius: Option<f64>,
    pub max_gn_iters: Option<usize>,
    pub seeds_per_query: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    pub horizon: f64,
    #[serde(default = "default_obs_step")]
    pub step: f64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub selection_guess: Option<Vec<f64>>,
    /// When present, `observe` additionally runs the ISS noise sweep.
    #[serde(default)]
    pub iss_amplitudes: Option<Vec<f64>>,
}

fn default_obs_step() -> f64 {
    1e-3
}

fn default_decimation() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: String,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { kind: "none".to_string(), amplitude: 0.0, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn build(&self) -> Result<NoiseSpec, CliError> {
        let kind = match self.kind.as_str() {
            "none" => NoiseKind::None,
            "uniform" => NoiseKind::Uniform,
            "sinusoid" => NoiseKind::Sinusoid,
            other => {
                return Err(CliError::Config(format!(
                    "observer.noise.kind: unknown kind {other:?} (none|uniform|sinusoid)"
                )))
            }
        };
        if !(self.amplitude >= 0.0) {
            return Err(CliError::Config(
                "observer.noise.amplitude: must be nonnegative".to_string(),
            ));
        }
        Ok(NoiseSpec { kind, amplitude: self.amplitude, seed: self.seed })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub cardinality: bool,
    pub characterization: bool,
    pub rank_map: bool,
    pub hm_order: usize,
    pub k_sweep: Option<Vec<f64>>,
    pub oracle_horizon: f64,
    pub oracle_tol: f64,
    pub oracle_step: f64,
    pub match_tol: f64,
    /// Probe points drawn from the domain for the k-sweep.
    pub probe_count: usize,
    pub probe_seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            cardinality: false,
            characterization: false,
            rank_map: false,
            hm_order: 1,
            k_sweep: None,
            oracle_horizon: 5.0,
            oracle_tol: 1e-3,
            oracle_step: 1e-2,
            match_tol: 1e-4,
            probe_count: 16,
            probe_seed: 1,
        }
    }
}

pub fn load_config(path: &str) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))
}

/// Everything the commands need, with every default materialized.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub system: SystemModel,
    pub cutoff_system: SystemModel,
    pub pair: FilterPair,
    pub field: TransformField,
    pub atlas: ImageAtlas,
    pub inversion: InversionConfig,
    pub r_keep: f64,
    pub r_zero: f64,
}

pub fn resolve(mut config: ExperimentConfig, seed_override: Option<u64>) -> Result<Resolved, CliError> {
    if let Some(seed) = seed_override {
        config.pair.seed = seed;
        if let Some(obs) = config.observer.as_mut() {
            obs.noise.seed = seed;
        }
    }
    let mut system = dynsys::example_registry(&config.system)
        .map_err(|_| CliError::Config(format!("system: unknown example {:?}", config.system)))?;
    if let Some(dom) = &config.domain {
        let built = dom.build()?;
        if built.dim() != system.n_x {
            return Err(CliError::Config(format!(
                "domain: dimension {} does not match system n_x = {}",
                built.dim(),
                system.n_x
            )));
        }
        system.domain = built;
    }
    let enclosing = system.domain.enclosing_radius();
    let r_keep = config.transform.r_keep.unwrap_or(enclosing);
    let r_zero = config.transform.r_zero.unwrap_or(1.5 * r_keep);
    if r_keep + 1e-12 < enclosing {
        return Err(CliError::Config(format!(
            "transform.r_keep: {r_keep} does not cover the domain (enclosing radius {enclosing})"
        )));
    }
    let cutoff_system = dynsys::cutoff_field(&system, r_keep, r_zero)
        .map_err(|e| CliError::Config(format!("transform cutoff: {e}")))?;
    let eigs: Vec<EigSpec> = config.pair.eigenvalues.iter().map(|e| e.to_spec()).collect();
    if eigs.is_empty() {
        return Err(CliError::Config("pair.eigenvalues: must be nonempty".to_string()));
    }
    let pair = make_filter_pair(system.n_y, config.pair.n_o, &eigs, config.pair.seed)
        .map_err(|e| CliError::Config(format!("pair: {e}")))?;
    let field = TransformField::new(
        cutoff_system.clone(),
        pair.clone(),
        TransformOpts {
            step: config.transform.step,
            tol_trunc: config.transform.tol_trunc,
            k: config.pair.k,
            tau: config.transform.tau,
        },
    )
    .map_err(|e| CliError::Config(format!("transform: {e}")))?;
    let atlas = tabulate_image(&field, &system.domain).map_err(CliError::Numeric)?;
    if atlas.is_empty() {
        return Err(CliError::Config("domain: grid contains no domain points".to_string()));
    }
    let mut inversion = InversionConfig::for_atlas(&atlas, field.tol_trunc);
    if let Some(v) = config.inversion.residual_tol {
        inversion.residual_tol = v;
    }
    if let Some(v) = config.inversion.cluster_radius {
        inversion.cluster_radius = v;
    }
    if let Some(v) = config.inversion.max_gn_iters {
        inversion.max_gn_iters = v;
    }
    if let Some(v) = config.inversion.seeds_per_query {
        inversion.seeds_per_query = v;
    }
    if !(inversion.residual_tol > 0.0) || !(inversion.cluster_radius > 0.0) {
        return Err(CliError::Config(
            "inversion: residual_tol and cluster_radius must be positive".to_string(),
        ));
    }
    Ok(Resolved {
        config,
        system,
        cutoff_system,
        pair,
        field,
        atlas,
        inversion,
        r_keep,
        r_zero,
    })
}

impl Resolved {
    pub fn observer_config(&self) -> Result<(ObserverConfig, &ObserverSection), CliError> {
        let section = self
            .config
            .observer
            .as_ref()
            .ok_or_else(|| CliError::Config("observer: section required".to_string()))?;
        if section.x0.len() != self.system.n_x {
            return Err(CliError::Config(format!(
                "observer.x0: dimension {} does not match system n_x = {}",
                section.x0.len(),
                self.system.n_x
            )));
        }
        if let Some(z0) = &section.z0 {
            if z0.len() != self.field.n_z() {
                return Err(CliError::Config(format!(
                    "observer.z0: dimension {} does not match n_z = {}",
                    z0.len(),
                    self.field.n_z()
                )));
            }
        }
        if !(section.horizon >= 0.0) {
            return Err(CliError::Config("observer.horizon: must be nonnegative".to_string()));
        }
        Ok((
            ObserverConfig {
                x0: section.x0.clone(),
                z0: section.z0.clone(),
                horizon: section.horizon,
                step: section.step,
                decimation: section.decimation,
                noise: section.noise.build()?,
                selection_guess: section.selection_guess.clone(),
            },
            section,
        ))
    }
}
