//! Versioned JSON run configurations.
//!
//! Every document carries `schema_version` and a `kind` tag. Optional fields are
//! filled with documented defaults; the names of the defaults that were applied
//! are kept so they can be echoed into the run manifest.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{StokesBasis, TorusSpec};
use crate::error::{Error, Result};
use crate::estimators::Regime;
use crate::experiments::{EstimatorSpec, ExperimentPlan, LinearBatteryConfig, ResidualStudyConfig};
use crate::noise::NoiseSpec;
use crate::nse::{InitialCondition, SolverConfig, DEFAULT_BLOWUP_BOUND, DEFAULT_DT};

pub const SCHEMA_VERSION: u32 = 1;

/// Physical and numerical settings shared by every document kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub nu: f64,
    pub gamma: f64,
    /// Period length; defaults to `2 pi`.
    pub length: Option<f64>,
    pub horizon: f64,
    /// Defaults to `1e-3`.
    pub dt: Option<f64>,
    /// Coarsest Brownian grid step; `dt` must divide it by a power of two.
    pub noise_base_dt: Option<f64>,
    pub grid_n: usize,
    /// Defaults to every mode the grid dealiases.
    pub m_sim: Option<usize>,
    pub initial: Option<InitialCondition>,
    pub nonlinear: Option<bool>,
    pub noise_enabled: Option<bool>,
    pub track_residual: Option<bool>,
    pub record_modes: Option<usize>,
    pub record_nonlinear: Option<bool>,
    pub blowup_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDocument {
    pub seed: u64,
    pub solver: SolverSection,
    pub replicate: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub seed: u64,
    pub solver: SolverSection,
    pub estimators: Vec<EstimatorSpec>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub first_replicate: Option<u64>,
    pub stride: Option<usize>,
    pub ks_significance: Option<f64>,
    pub variance_ratio_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBatteryDocument {
    pub seed: u64,
    pub nu: f64,
    pub gamma: f64,
    pub length: Option<f64>,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub replicates: usize,
    pub modes: Vec<usize>,
    pub beta: f64,
    pub n_grid: Vec<usize>,
    /// Required number of modes within 3 standard errors; defaults to 90%.
    pub min_within_3se: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualDocument {
    pub seed: u64,
    pub solver: SolverSection,
    pub alpha_primes: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub first_replicate: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Document {
    Simulate(SimulateDocument),
    Plan(PlanDocument),
    LinearBattery(LinearBatteryDocument),
    ResidualStudy(ResidualDocument),
}

/// A configuration after defaults and cross-field validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedConfig {
    Simulate { solver: SolverConfig, replicate: u64 },
    Plan { plan: ExperimentPlan },
    LinearBattery { battery: LinearBatteryConfig, min_within_3se: usize },
    ResidualStudy { study: ResidualStudyConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub alpha: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedConfig {
    pub schema_version: u32,
    pub resolved: ResolvedConfig,
    /// `field = value` for every default that was filled in.
    pub defaults_applied: Vec<String>,
    pub regimes: Vec<RegimeLabel>,
}

impl ParsedConfig {
    pub fn master_seed(&self) -> u64 {
        match &self.resolved {
            ResolvedConfig::Simulate { solver, .. } => solver.noise.master_seed,
            ResolvedConfig::Plan { plan } => plan.solver.noise.master_seed,
            ResolvedConfig::LinearBattery { battery, .. } => battery.master_seed,
            ResolvedConfig::ResidualStudy { study } => study.solver.noise.master_seed,
        }
    }

    /// Digest of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.resolved).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: std::fmt::Debug + Clone>(&mut self, field: &str, value: Option<T>, default: T) -> T {
        match value {
            Some(v) => v,
            None => {
                self.0.push(format!("{field} = {default:?}"));
                default
            }
        }
    }
}

/// Reads and validates a configuration file. `seed` overrides the file's seed.
pub fn parse_config(path: impl AsRef<Path>, seed: Option<u64>) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, seed)
}

pub fn parse_config_str(text: &str, seed: Option<u64>) -> Result<ParsedConfig> {
    let mut raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    match raw.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {v}; expected {SCHEMA_VERSION}"),
            ))
        }
        None => return Err(Error::config("schema_version", "missing or not an integer")),
    }
    let map = raw
        .as_object_mut()
        .ok_or_else(|| Error::config("<document>", "expected a JSON object"))?;
    map.remove("schema_version");
    let kind = match map.remove("kind") {
        Some(serde_json::Value::String(k)) => k,
        _ => return Err(Error::config("kind", "missing or not a string")),
    };
    let document = match kind.as_str() {
        "simulate" => Document::Simulate(from_value(raw)?),
        "plan" => Document::Plan(from_value(raw)?),
        "linear_battery" => Document::LinearBattery(from_value(raw)?),
        "residual_study" => Document::ResidualStudy(from_value(raw)?),
        other => {
            return Err(Error::config(
                "kind",
                format!("unknown kind `{other}`; expected simulate, plan, linear_battery or residual_study"),
            ))
        }
    };
    resolve(document, seed)
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<document>".to_string() } else { path };
        Error::config(field, e.into_inner().to_string())
    })
}

fn resolve(document: Document, seed: Option<u64>) -> Result<ParsedConfig> {
    let mut defaults = Defaults(Vec::new());
    let mut regimes = Vec::new();
    let resolved = match document {
        Document::Simulate(d) => {
            let solver = resolve_solver(&d.solver, seed.unwrap_or(d.seed), &mut defaults)?;
            let replicate = defaults.take("replicate", d.replicate, 0);
            ResolvedConfig::Simulate { solver, replicate }
        }
        Document::Plan(d) => {
            let solver = resolve_solver(&d.solver, seed.unwrap_or(d.seed), &mut defaults)?;
            let gamma = solver.noise.gamma;
            for (i, e) in d.estimators.iter().enumerate() {
                let regime = Regime::classify(e.alpha, gamma);
                if regime == Regime::Unsupported {
                    return Err(Error::config(
                        format!("estimators[{i}].alpha"),
                        "alpha must exceed gamma - 1",
                    ));
                }
                regimes.push(RegimeLabel { alpha: e.alpha, regime });
            }
            let mut plan = ExperimentPlan::new(solver, d.estimators, d.n_grid, d.replicates);
            plan.first_replicate = defaults.take("first_replicate", d.first_replicate, 0);
            plan.stride = defaults.take("stride", d.stride, 1);
            plan.ks_significance = defaults.take("ks_significance", d.ks_significance, plan.ks_significance);
            plan.variance_ratio_band =
                defaults.take("variance_ratio_band", d.variance_ratio_band, plan.variance_ratio_band);
            plan.validate()?;
            ResolvedConfig::Plan { plan }
        }
        Document::LinearBattery(d) => {
            let length = defaults.take("length", d.length, 2.0 * PI);
            let battery = LinearBatteryConfig {
                torus: TorusSpec::new(length)?,
                nu: d.nu,
                gamma: d.gamma,
                horizon: d.horizon,
                dt: defaults.take("dt", d.dt, DEFAULT_DT),
                replicates: d.replicates,
                master_seed: seed.unwrap_or(d.seed),
                modes: d.modes,
                beta: d.beta,
                n_grid: d.n_grid,
            };
            NoiseSpec::new(battery.gamma, battery.master_seed)?;
            if !(battery.nu.is_finite() && battery.nu > 0.0) {
                return Err(Error::config("nu", "viscosity must be positive"));
            }
            battery.validate()?;
            let ratio = battery.horizon / battery.dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::config("dt", "T/dt must be a positive integer"));
            }
            let default_min = (battery.modes.len() * 9).div_ceil(10);
            let min_within_3se = defaults.take("min_within_3se", d.min_within_3se, default_min);
            if min_within_3se > battery.modes.len() {
                return Err(Error::config("min_within_3se", "exceeds the number of checked modes"));
            }
            ResolvedConfig::LinearBattery { battery, min_within_3se }
        }
        Document::ResidualStudy(d) => {
            let mut section = d.solver.clone();
            if section.track_residual == Some(false) {
                return Err(Error::config("solver.track_residual", "the residual study tracks the residual"));
            }
            section.track_residual = Some(true);
            let solver = resolve_solver(&section, seed.unwrap_or(d.seed), &mut defaults)?;
            let study = ResidualStudyConfig {
                solver,
                alpha_primes: d.alpha_primes,
                n_grid: d.n_grid,
                replicates: d.replicates,
                first_replicate: defaults.take("first_replicate", d.first_replicate, 0),
            };
            study.validate()?;
            ResolvedConfig::ResidualStudy { study }
        }
    };
    Ok(ParsedConfig {
        schema_version: SCHEMA_VERSION,
        resolved,
        defaults_applied: defaults.0,
        regimes,
    })
}

fn resolve_solver(s: &SolverSection, seed: u64, defaults: &mut Defaults) -> Result<SolverConfig> {
    let mut noise = NoiseSpec::new(s.gamma, seed)?;
    if let Some(base) = s.noise_base_dt {
        noise = noise.with_base_dt(base);
    }
    let length = defaults.take("solver.length", s.length, 2.0 * PI);
    let torus = TorusSpec::new(length)?;
    let m_sim = match s.m_sim {
        Some(m) => m,
        None => {
            let m = StokesBasis::dealiased(torus, s.grid_n)?.len();
            defaults.0.push(format!("solver.m_sim = {m}"));
            m
        }
    };
    let cfg = SolverConfig {
        nu: s.nu,
        noise,
        torus,
        grid_n: s.grid_n,
        m_sim,
        horizon: s.horizon,
        dt: defaults.take("solver.dt", s.dt, DEFAULT_DT),
        initial: defaults.take("solver.initial", s.initial.clone(), InitialCondition::Zero),
        track_residual: defaults.take("solver.track_residual", s.track_residual, false),
        nonlinear: defaults.take("solver.nonlinear", s.nonlinear, true),
        noise_enabled: defaults.take("solver.noise_enabled", s.noise_enabled, true),
        blowup_bound: defaults.take("solver.blowup_bound", s.blowup_bound, DEFAULT_BLOWUP_BOUND),
        record_modes: s.record_modes,
        record_nonlinear: defaults.take("solver.record_nonlinear", s.record_nonlinear, true),
    };
    cfg.validate().map_err(|e| match e {
        Error::Config { field, rule } if !field.starts_with("solver.") && field != "gamma" => {
            Error::config(format!("solver.{field}"), rule)
        }
        other => other,
    })?;
    Ok(cfg)
}
