//! JSON run configurations. Every block rejects unknown keys and carries a
//! `schema_version`; missing fields take the defaults below.

use std::path::{Path, PathBuf};

use mmo_core::hybrid::{FoldedNodeNF, GlobalReturnModel, LocalModel, SectionPair};
use mmo_core::koper::{KoperParams, K_STANDARD, LAMBDA_FSN, LAMBDA_NODE_FOCUS};
use mmo_core::singular_maps::MapId;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn check_version(v: u32) -> Result<(), CliError> {
    if v != SCHEMA_VERSION {
        return Err(CliError::Config(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

/// Parse a config file, or return the defaults when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KoperSimConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub params: KoperParams,
    /// Initial `(x, y, z)`.
    pub initial: [f64; 3],
    pub t_end: f64,
    pub sample_dt: f64,
    pub tol: f64,
    /// Maxima of `x` above this value count as large oscillations.
    pub lao_threshold: f64,
    pub max_period: usize,
    pub transient_fraction: f64,
}

impl Default for KoperSimConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            params: KoperParams {
                eps1: 0.01,
                eps2: 1.0,
                k: K_STANDARD,
                lambda: -7.0,
                mu: 0.0,
            },
            initial: [-2.0, -2.0, -8.0],
            t_end: 300.0,
            sample_dt: 0.01,
            tol: 1e-9,
            lao_threshold: 1.5,
            max_period: 6,
            transient_fraction: 0.5,
        }
    }
}

impl KoperSimConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version)?;
        let p = &self.params;
        positive("params.eps1", p.eps1)?;
        positive("params.eps2", p.eps2)?;
        finite("params.k", p.k)?;
        finite("params.lambda", p.lambda)?;
        for (i, v) in self.initial.iter().enumerate() {
            finite(&format!("initial[{i}]"), *v)?;
        }
        positive("t_end", self.t_end)?;
        positive("sample_dt", self.sample_dt)?;
        positive("tol", self.tol)?;
        finite("lao_threshold", self.lao_threshold)?;
        if self.max_period == 0 {
            return Err(CliError::Config("max_period must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(CliError::Config("transient_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapsComputeConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub k: f64,
    pub mu: f64,
    pub lambdas: Vec<f64>,
    pub maps: Vec<MapId>,
    pub n_points: usize,
    pub tol: f64,
}

impl Default for MapsComputeConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            k: K_STANDARD,
            mu: 0.1,
            lambdas: vec![-7.0],
            maps: MapId::ALL.to_vec(),
            n_points: 101,
            tol: 1e-8,
        }
    }
}

/// Parameters valid for the singular maps; the canard maps additionally need
/// `k = -10` and `lambda` strictly inside the folded-node window.
fn validate_map_params(k: f64, mu: f64, lambdas: &[f64], canard_maps: bool) -> Result<(), CliError> {
    finite("k", k)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(CliError::Config(format!("mu must be non-negative, got {mu}")));
    }
    if lambdas.is_empty() {
        return Err(CliError::Config("lambda grid is empty".into()));
    }
    for &l in lambdas {
        finite("lambda", l)?;
        if !(l >= LAMBDA_FSN && l <= LAMBDA_NODE_FOCUS) {
            return Err(CliError::Config(format!(
                "lambda = {l} outside the funnel window [{LAMBDA_FSN}, {LAMBDA_NODE_FOCUS}] (OutOfRangeLambda)"
            )));
        }
        if canard_maps && (l == LAMBDA_FSN || l == LAMBDA_NODE_FOCUS) {
            return Err(CliError::Config(format!("canard maps need lambda strictly inside the node window, got {l} (OutOfRangeLambda)")));
        }
    }
    if canard_maps && k != K_STANDARD {
        return Err(CliError::Config(format!("canard maps are implemented for k = -10 only, got {k}")));
    }
    Ok(())
}

impl MapsComputeConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version)?;
        if self.maps.is_empty() {
            return Err(CliError::Config("no maps requested".into()));
        }
        let canard = self.maps.iter().any(|m| m.is_canard_map());
        validate_map_params(self.k, self.mu, &self.lambdas, canard)?;
        if self.n_points < 2 {
            return Err(CliError::Config("n_points must be at least 2".into()));
        }
        positive("tol", self.tol)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapsFitConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Map sample CSV files; empty means every `m_*_lambda_*.csv` in `input_dir`.
    pub inputs: Vec<PathBuf>,
    pub input_dir: Option<PathBuf>,
}

impl Default for MapsFitConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            inputs: Vec::new(),
            input_dir: None,
        }
    }
}

impl MapsFitConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmoAnalyzeConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub k: f64,
    pub mu: f64,
    /// Bracket for the onset search; `null` skips it.
    pub bracket: Option<[f64; 2]>,
    /// Values at which fixed points and node margins are reported.
    pub lambdas: Vec<f64>,
    pub n_points: usize,
    pub tol: f64,
}

impl Default for MmoAnalyzeConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            k: K_STANDARD,
            mu: 0.1,
            bracket: Some([-7.5, -6.0]),
            lambdas: vec![-7.5, -7.0, -6.5],
            n_points: 101,
            tol: 1e-8,
        }
    }
}

impl MmoAnalyzeConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version)?;
        validate_map_params(self.k, self.mu, &self.lambdas, false)?;
        if let Some([a, b]) = self.bracket {
            validate_map_params(self.k, self.mu, &[a, b], false)?;
            if !(a < b) {
                return Err(CliError::Config("bracket must satisfy a < b".into()));
            }
        }
        if self.n_points < 3 {
            return Err(CliError::Config("n_points must be at least 3".into()));
        }
        positive("tol", self.tol)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridRunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub local: LocalModel,
    pub sections: SectionPair,
    pub global: GlobalReturnModel,
    /// `(y, z)` on the entry section; `y = null` means `k1^2 eps`.
    pub initial_y: Option<f64>,
    pub initial_z: f64,
    pub n_returns: usize,
    pub max_period: usize,
    pub transient_fraction: f64,
    pub sao_window: f64,
    pub chaos_tol: f64,
    pub tol: f64,
    /// Run once per listed `m0` (in parallel) instead of once with `global.m0`.
    pub sweep_m0: Option<Vec<f64>>,
}

impl Default for HybridRunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            local: LocalModel::FoldedNode(FoldedNodeNF { eps: 0.01, mu: 0.006 }),
            sections: SectionPair::default(),
            global: GlobalReturnModel::quadratic(0.0, 0.1, -0.015),
            initial_y: None,
            initial_z: 0.15,
            n_returns: 40,
            max_period: 20,
            transient_fraction: 0.5,
            sao_window: 2.0,
            chaos_tol: 1e-6,
            tol: 1e-10,
            sweep_m0: None,
        }
    }
}

impl HybridRunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version)?;
        if self.n_returns == 0 {
            return Err(CliError::Config("n_returns must be at least 1".into()));
        }
        if self.max_period == 0 {
            return Err(CliError::Config("max_period must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(CliError::Config("transient_fraction must lie in [0, 1)".into()));
        }
        positive("sections.k1", self.sections.k1)?;
        positive("sections.k2", self.sections.k2)?;
        positive("sao_window", self.sao_window)?;
        positive("chaos_tol", self.chaos_tol)?;
        positive("tol", self.tol)?;
        finite("initial_z", self.initial_z)?;
        if let Some(y) = self.initial_y {
            finite("initial_y", y)?;
        }
        match &self.local {
            LocalModel::FoldedNode(n) => {
                positive("local.eps", n.eps)?;
                if !(n.mu > 0.0 && n.mu < 1.0) {
                    return Err(CliError::Config(format!("local.mu = {} outside (0, 1)", n.mu)));
                }
            }
            LocalModel::SingularHopf(n) => {
                positive("local.eps", n.eps)?;
                for (name, v) in [("nu", n.nu), ("a", n.a), ("b", n.b), ("c", n.c)] {
                    finite(&format!("local.{name}"), v)?;
                }
            }
        }
        self.global.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = &self.sweep_m0 {
            if s.is_empty() {
                return Err(CliError::Config("sweep_m0 is empty".into()));
            }
            for &m in s {
                finite("sweep_m0", m)?;
            }
        }
        Ok(())
    }
}
