use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentConfig, ExplorationSchedule};
use crate::graph::{Commodity, Link, Network, NetworkError, NetworkGraph};
use crate::lagrangian::{DualConfig, LambdaInit};

/// The shipped edge-network configuration.
pub const EDGE_CONFIG: &str = include_str!("../../configs/edge.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Bp,
    Umw,
    #[default]
    Cdrl,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Bp => "bp",
            PolicyKind::Umw => "umw",
            PolicyKind::Cdrl => "cdrl",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bp" => Ok(PolicyKind::Bp),
            "umw" => Ok(PolicyKind::Umw),
            "cdrl" => Ok(PolicyKind::Cdrl),
            other => Err(format!("unknown policy `{other}` (expected bp, umw or cdrl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
}

/// Episode counts are signed so that negative values surface as validation
/// errors rather than type errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Slots per episode (`T`).
    pub length: i64,
    pub train: i64,
    pub improve: i64,
    pub test: i64,
    /// Episodes per policy iteration (`V`).
    pub per_iteration: i64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { length: 20, train: 3000, improve: 1000, test: 200, per_iteration: 10 }
    }
}

impl EpisodeConfig {
    pub const PAPER_SCALE: (i64, i64, i64) = (20_000, 10_000, 2_000);

    pub fn length(&self) -> usize {
        self.length as usize
    }

    pub fn per_iteration(&self) -> usize {
        self.per_iteration as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub policy: PolicyKind,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub topology: TopologyConfig,
    pub commodities: Vec<Commodity>,
    #[serde(default)]
    pub episodes: EpisodeConfig,
    #[serde(default)]
    pub agents: AgentConfig,
    #[serde(default)]
    pub exploration: ExplorationSchedule,
    #[serde(default)]
    pub dual: DualConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn edge() -> Self {
        Self::from_toml(EDGE_CONFIG).expect("shipped config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialized form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn paper_scale(mut self) -> Self {
        let (train, improve, test) = EpisodeConfig::PAPER_SCALE;
        self.episodes.train = train;
        self.episodes.improve = improve;
        self.episodes.test = test;
        self
    }

    /// Same arrival rate for every commodity.
    pub fn with_rate(mut self, rate: f64) -> Self {
        for c in &mut self.commodities {
            c.mean_rate = rate;
        }
        self
    }

    pub fn network(&self) -> Result<Network, NetworkError> {
        Network::new(
            NetworkGraph::new(self.topology.nodes.clone(), self.topology.links.clone()),
            self.commodities.clone(),
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let e = &self.episodes;
        if e.length <= 0 {
            errors.push(format!("episodes.length must be positive, got {}", e.length));
        }
        if e.per_iteration <= 0 {
            errors.push(format!("episodes.per_iteration must be positive, got {}", e.per_iteration));
        }
        for (name, v) in [("train", e.train), ("improve", e.improve), ("test", e.test)] {
            if v < 0 {
                errors.push(format!("episodes.{name} must be non-negative, got {v}"));
            }
        }
        let a = &self.agents;
        if !(0.0..=1.0).contains(&a.gamma) {
            errors.push(format!("agents.gamma must lie in [0, 1], got {}", a.gamma));
        }
        if a.batch_size == 0 {
            errors.push("agents.batch_size must be positive".into());
        }
        if a.buffer_capacity < a.batch_size {
            errors.push("agents.buffer_capacity must be at least the batch size".into());
        }
        if a.hidden.is_empty() || a.hidden.contains(&0) {
            errors.push("agents.hidden must list positive layer widths".into());
        }
        if !(0.0..=1.0).contains(&a.soft_update) {
            errors.push("agents.soft_update must lie in [0, 1]".into());
        }
        if let Some(s) = a.obs_scale {
            if !(s.is_finite() && s > 0.0) {
                errors.push("agents.obs_scale must be positive".into());
            }
        }
        let x = &self.exploration;
        if !(0.0..=1.0).contains(&x.decay) || !(0.0..=1.0).contains(&x.floor) {
            errors.push("exploration.decay and exploration.floor must lie in [0, 1]".into());
        }
        let d = &self.dual;
        if d.eta < 0.0 {
            errors.push("dual.eta must be non-negative".into());
        }
        if d.window == 0 {
            errors.push("dual.window must be positive".into());
        }
        let nc = self.commodities.len();
        if let Some(etas) = &d.eta_per_commodity {
            if etas.len() != nc || etas.iter().any(|&v| v < 0.0) {
                errors.push(format!("dual.eta_per_commodity needs {nc} non-negative values"));
            }
        }
        if let LambdaInit::Fixed(v) = &d.lambda_init {
            if v.len() != nc || v.iter().any(|&l| l < 0.0) {
                errors.push(format!("dual.lambda_init needs {nc} non-negative values"));
            }
        }
        if let Err(err) = self.network() {
            errors.push(err.to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(errors))
        }
    }
}
