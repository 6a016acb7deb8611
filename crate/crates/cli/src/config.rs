//! Experiment configuration: JSON with every parameter explicit. Defaults
//! are materialized at load so the copy persisted next to the results fully
//! reproduces the run.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tvconsensus_core::ergodicity::AssumptionParams;
use tvconsensus_core::objectives::Family;
use tvconsensus_core::optimizer::{FeasibleBox, Method};
use tvconsensus_core::topology::{TopologyConfig, TopologyMode};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologySection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_extra_edge_prob")]
    pub extra_edge_prob: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_epsilon_exponent")]
    pub epsilon_exponent: f64,
    /// Schedule scale; mutually exclusive with `log10_delta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Log-space scale for values below f64 range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log10_delta: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_n() -> usize {
    6
}
fn default_extra_edge_prob() -> f64 {
    0.3
}
fn default_mode() -> String {
    "standard".into()
}
fn default_epsilon_exponent() -> f64 {
    1.5
}
fn default_lambda() -> f64 {
    0.5
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            n: default_n(),
            seed: 0,
            extra_edge_prob: default_extra_edge_prob(),
            mode: default_mode(),
            epsilon_exponent: default_epsilon_exponent(),
            delta: Some(0.5),
            log10_delta: None,
            lambda: default_lambda(),
        }
    }
}

impl TopologySection {
    pub fn assumption_params(&self) -> Result<AssumptionParams, ConfigError> {
        match (self.delta, self.log10_delta) {
            (Some(_), Some(_)) => Err(bad("give either delta or log10_delta, not both")),
            (Some(d), None) => AssumptionParams::new(self.n, d, self.lambda)
                .map_err(|e| bad(e.to_string())),
            (None, Some(l)) => AssumptionParams::from_log10_delta(self.n, l, self.lambda)
                .map_err(|e| bad(e.to_string())),
            (None, None) => AssumptionParams::new(self.n, 0.5, self.lambda)
                .map_err(|e| bad(e.to_string())),
        }
    }

    pub fn topology_config(&self) -> Result<TopologyConfig, ConfigError> {
        let mode = match self.mode.as_str() {
            "standard" => TopologyMode::Standard,
            "identity_approaching" => TopologyMode::IdentityApproaching,
            other => return Err(bad(format!("unknown topology mode: {other:?}"))),
        };
        let cfg = TopologyConfig {
            n: self.n,
            seed: self.seed,
            extra_edge_prob: self.extra_edge_prob,
            mode,
            epsilon_exponent: self.epsilon_exponent,
            assumption_params: self.assumption_params()?,
        };
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    fn materialize(&mut self) {
        if self.delta.is_none() && self.log10_delta.is_none() {
            self.delta = Some(0.5);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveSection {
    #[serde(default = "default_family")]
    pub family: String,
    /// Domain dimension; fixed to 2 for the bivariate families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub dataset_seed: u64,
}

fn default_family() -> String {
    "squared_error".into()
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection { family: default_family(), dim: Some(1), dataset_seed: 0 }
    }
}

impl ObjectiveSection {
    pub fn family(&self) -> Result<Family, ConfigError> {
        Family::parse(&self.family).map_err(|e| bad(e.to_string()))
    }

    pub fn dim(&self) -> Result<usize, ConfigError> {
        let family = self.family()?;
        let dim = self.dim.or(family.fixed_dim()).unwrap_or(1);
        if let Some(fixed) = family.fixed_dim() {
            if dim != fixed {
                return Err(bad(format!(
                    "family {} has fixed dimension {fixed}, got {dim}",
                    family.name()
                )));
            }
        }
        if dim == 0 {
            return Err(bad("dim must be positive"));
        }
        Ok(dim)
    }

    fn materialize(&mut self) -> Result<(), ConfigError> {
        self.dim = Some(self.dim()?);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_step_scale")]
    pub step_scale: f64,
    #[serde(default = "default_state_seeds")]
    pub state_seeds: Vec<u64>,
}

fn default_methods() -> Vec<String> {
    vec!["UDPSG".into()]
}
fn default_iterations() -> usize {
    20_000
}
fn default_step_scale() -> f64 {
    1.0
}
fn default_state_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            methods: default_methods(),
            iterations: default_iterations(),
            step_scale: default_step_scale(),
            state_seeds: default_state_seeds(),
        }
    }
}

impl OptimizerSection {
    pub fn methods(&self) -> Result<Vec<Method>, ConfigError> {
        if self.methods.is_empty() {
            return Err(bad("at least one method required"));
        }
        self.methods
            .iter()
            .map(|m| Method::parse(m).ok_or_else(|| bad(format!("unknown method: {m:?}"))))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicitySection {
    /// Start indices for products, weight estimates and uniform-gap probes.
    #[serde(default = "default_s_list")]
    pub s_list: Vec<usize>,
    /// End indices for the bound grid, paired with each s (k >= s kept).
    #[serde(default)]
    pub k_list: Vec<usize>,
    /// Estimation horizon K; must be at least B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Blocks scanned for the row-spread decay series.
    #[serde(default = "default_spread_blocks")]
    pub spread_max_blocks: usize,
    /// Indices exported as A_<t>.csv.
    #[serde(default)]
    pub snapshots: Vec<usize>,
    /// Window for the identity-approaching diagnostics (default B).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

fn default_s_list() -> Vec<usize> {
    vec![0]
}
fn default_spread_blocks() -> usize {
    200
}

impl Default for ErgodicitySection {
    fn default() -> Self {
        ErgodicitySection {
            s_list: default_s_list(),
            k_list: Vec::new(),
            horizon: None,
            spread_max_blocks: default_spread_blocks(),
            snapshots: Vec::new(),
            window: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub ergodicity: ErgodicitySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_box: Option<BoxSection>,
}

fn default_experiment() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.materialize()?;
        Ok(cfg)
    }

    /// Fills every omitted field with its default so the persisted copy is
    /// complete, then validates cross-field consistency.
    pub fn materialize(&mut self) -> Result<(), ConfigError> {
        self.topology.materialize();
        self.objective.materialize()?;
        let params = self.topology.assumption_params()?;
        let b = params.b();
        if self.ergodicity.horizon.is_none() {
            self.ergodicity.horizon = Some(60 * b);
        }
        if self.ergodicity.k_list.is_empty() {
            self.ergodicity.k_list = vec![10 * b];
        }
        if self.ergodicity.window.is_none() {
            self.ergodicity.window = Some(b);
        }
        let horizon = self.ergodicity.horizon.unwrap();
        if horizon < b {
            return Err(bad(format!(
                "horizon {horizon} is below the communication interval B={b} for n={}",
                self.topology.n
            )));
        }
        self.topology.topology_config()?;
        self.optimizer.methods()?;
        let dim = self.objective.dim()?;
        if let Some(fb) = &self.feasible_box {
            if fb.lower.len() != dim || fb.upper.len() != dim {
                return Err(bad("feasible_box bounds must match the objective dimension"));
            }
        }
        Ok(())
    }

    pub fn feasible_box(&self) -> Result<FeasibleBox, ConfigError> {
        let dim = self.objective.dim()?;
        let fb = match &self.feasible_box {
            Some(fb) => FeasibleBox { lower: fb.lower.clone(), upper: fb.upper.clone() },
            None => FeasibleBox::unit(dim),
        };
        fb.validate().map_err(|e| bad(e.to_string()))?;
        Ok(fb)
    }
}
