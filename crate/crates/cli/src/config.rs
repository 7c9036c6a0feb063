//! Run configuration: a TOML file, then `--set key.path=value` overrides, then
//! named flags. Later sources win.

use std::path::{Path, PathBuf};

use fed3r_core::baselines::LpConfig;
use fed3r_core::cost::{CostParams, DEFAULT_EXTRACTOR_PARAMS, DEFAULT_F_EXTRACTOR, DEFAULT_F_HEAD};
use fed3r_core::federation::SamplingMode;
use fed3r_core::DEFAULT_LAMBDA;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunAlgorithm {
    Fed3r,
    Fed3rRf,
    FedavgLp,
    FedavgmLp,
    /// Linear probing initialised from a Fed3R solution.
    Fed3rFtlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub algorithm: RunAlgorithm,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub federation: FederationSection,
    pub rff: RffSection,
    pub lp: LpSection,
    pub cost: CostSection,
}

/// Feature files when given; otherwise a synthetic Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub features: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub anisotropy: f64,
    /// Held-out share of the synthetic data; 0 evaluates on the training set.
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub clients: usize,
    /// 0 selects one-class-per-client shards (`clients / classes` per class).
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub clients_per_round: usize,
    pub sampling: SamplingMode,
    pub rounds_max: Option<usize>,
    pub lambda: f64,
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RffSection {
    pub dim: usize,
    pub sigma: f64,
    /// Derived from the run seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub server_lr: f64,
    pub server_momentum: f64,
    pub rounds: usize,
    /// Defaults to 1 for random init and 0.1 for a Fed3R init.
    pub temperature: Option<f64>,
    /// Pick τ for a Fed3R init from `temperature_grid` by training cross-entropy.
    pub calibrate_temperature: bool,
    pub temperature_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub f_extractor: f64,
    pub f_head: f64,
    pub extractor_params: u64,
    pub include_rff_projection: bool,
    pub ship_rff_map: bool,
    pub bootstrap_extractor: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            algorithm: RunAlgorithm::Fed3r,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            partition: PartitionConfig::default(),
            federation: FederationSection::default(),
            rff: RffSection::default(),
            lp: LpSection::default(),
            cost: CostSection::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            features: None,
            test_features: None,
            manifest: None,
            classes: 10,
            dim: 32,
            per_class: 100,
            separation: 3.0,
            anisotropy: 1.0,
            test_fraction: 0.2,
        }
    }
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            clients: 50,
            alpha: 0.5,
        }
    }
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            clients_per_round: 10,
            sampling: SamplingMode::WithoutReplacement,
            rounds_max: None,
            lambda: DEFAULT_LAMBDA,
            eval_every: 1,
        }
    }
}

impl Default for RffSection {
    fn default() -> Self {
        Self {
            dim: 1024,
            sigma: 1000.0,
            seed: None,
        }
    }
}

impl Default for LpSection {
    fn default() -> Self {
        let lp = LpConfig::default();
        Self {
            lr: lp.lr,
            weight_decay: lp.weight_decay,
            batch_size: lp.batch_size,
            local_epochs: lp.local_epochs,
            server_lr: lp.server_lr,
            server_momentum: lp.server_momentum,
            rounds: lp.rounds,
            temperature: None,
            calibrate_temperature: false,
            temperature_grid: fed3r_core::baselines::DEFAULT_TEMPERATURE_GRID.to_vec(),
        }
    }
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            f_extractor: DEFAULT_F_EXTRACTOR,
            f_head: DEFAULT_F_HEAD,
            extractor_params: DEFAULT_EXTRACTOR_PARAMS,
            include_rff_projection: true,
            ship_rff_map: false,
            bootstrap_extractor: false,
        }
    }
}

impl LpSection {
    pub fn to_lp_config(&self, fed3r_init: bool) -> LpConfig {
        let default_tau = if fed3r_init { 0.1 } else { 1.0 };
        LpConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            local_epochs: self.local_epochs,
            server_lr: self.server_lr,
            server_momentum: self.server_momentum,
            rounds: self.rounds,
            temperature: self.temperature.unwrap_or(default_tau),
        }
    }
}

impl CostSection {
    /// Data-dependent fields are filled in by the federation drivers.
    pub fn to_params(&self, local_epochs: usize) -> CostParams {
        let mut p = CostParams::new(0, 0);
        p.local_epochs = local_epochs as u64;
        p.f_extractor = self.f_extractor;
        p.f_head = self.f_head;
        p.extractor_params = self.extractor_params;
        p.include_rff_projection = self.include_rff_projection;
        p.ship_rff_map = self.ship_rff_map;
        p.bootstrap_extractor = self.bootstrap_extractor;
        p
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |msg: String| Err(Failure::Config(msg));
        if self.data.features.is_none() {
            if self.data.classes < 2 || self.data.dim < 2 || self.data.per_class == 0 {
                return bad("synthetic data needs classes >= 2, dim >= 2, per_class >= 1".into());
            }
            if !(0.0..1.0).contains(&self.data.test_fraction) {
                return bad(format!(
                    "data.test_fraction must lie in [0, 1), got {}",
                    self.data.test_fraction
                ));
            }
        }
        if self.data.test_features.is_some() && self.data.features.is_none() {
            return bad("data.test_features requires data.features".into());
        }
        if self.data.manifest.is_none() {
            if self.partition.clients == 0 {
                return bad("partition.clients must be at least 1".into());
            }
            if !(self.partition.alpha >= 0.0) || !self.partition.alpha.is_finite() {
                return bad(format!(
                    "partition.alpha must be >= 0, got {}",
                    self.partition.alpha
                ));
            }
        }
        if self.federation.clients_per_round == 0 {
            return bad("federation.clients_per_round must be at least 1".into());
        }
        if !(self.federation.lambda > 0.0) || !self.federation.lambda.is_finite() {
            return bad(format!(
                "federation.lambda must be positive, got {}",
                self.federation.lambda
            ));
        }
        if self.algorithm == RunAlgorithm::Fed3rRf && (self.rff.dim == 0 || !(self.rff.sigma > 0.0))
        {
            return bad("fed3r_rf needs rff.dim >= 1 and rff.sigma > 0".into());
        }
        if self.algorithm == RunAlgorithm::FedavgmLp && !(self.lp.server_momentum > 0.0) {
            return bad("fedavgm_lp needs lp.server_momentum > 0".into());
        }
        if self.algorithm == RunAlgorithm::FedavgLp && self.lp.server_momentum != 0.0 {
            return bad("fedavg_lp runs without server momentum; use fedavgm_lp".into());
        }
        if self.lp.calibrate_temperature && self.lp.temperature_grid.is_empty() {
            return bad("lp.temperature_grid is empty".into());
        }
        if self.is_lp() {
            let fed3r_init = self.algorithm == RunAlgorithm::Fed3rFtlp;
            self.lp
                .to_lp_config(fed3r_init)
                .validate()
                .map_err(|e| Failure::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn is_lp(&self) -> bool {
        matches!(
            self.algorithm,
            RunAlgorithm::FedavgLp | RunAlgorithm::FedavgmLp | RunAlgorithm::Fed3rFtlp
        )
    }
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `path` (dot separated) in `table`, creating intermediate tables.
pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<(), Failure> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Failure::Config(format!("empty override key in '{path}'")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Failure::Config(format!(
                    "'{p}' in '{path}' is not a section"
                )))
            }
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), Failure> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("override '{spec}' is not key=value")))?;
    set_path(table, key.trim(), parse_value(raw.trim()))
}

pub fn load_table(path: Option<&Path>) -> Result<Table, Failure> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub fn resolve(table: Table) -> Result<RunConfig, Failure> {
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
