use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ChainParams, ParamsError};
use crate::mining::MinerPolicy;
use crate::tsp::{MAX_CITIES, MIN_CITIES};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Miners execute searchers and evaluators; time follows steps spent.
    #[default]
    Faithful,
    /// Miniblock times are drawn from exponential distributions.
    Statistical,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Miner,
    Client,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u64,
    /// Steps per tick.
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub role: Role,
    #[serde(default)]
    pub policy: Option<MinerPolicy>,
}

/// Message delay in ticks.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Constant(u64),
    Uniform {
        lo: u64,
        hi: u64,
    },
    /// `matrix[i][j]` is the delay from the i-th to the j-th node.
    PerLink(Vec<Vec<u64>>),
}

impl Default for DelayModel {
    fn default() -> DelayModel {
        DelayModel::Constant(0)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    #[default]
    FullMesh,
    /// Ring plus random extra links up to `degree` peers per node;
    /// messages are forwarded by gossip.
    Random { degree: usize },
}

/// A TSP instance: explicit grid coordinates or a number of random cities.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TspSpec {
    #[serde(default)]
    pub cities: Option<usize>,
    #[serde(default)]
    pub coords: Option<Vec<(u32, u32)>>,
    #[serde(default)]
    pub stall_factor: Option<u64>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub submit_time: u64,
    pub client: u64,
    pub charge: u64,
    #[serde(default)]
    pub tag: u64,
    pub tsp: TspSpec,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    /// Simulated ticks.
    pub duration: u64,
    /// Stop once any node's tip reaches this height.
    #[serde(default)]
    pub max_height: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub params: ChainParams,
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default)]
    pub topology: Topology,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub jobs: Vec<JobConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario")]
    Io(#[from] std::io::Error),
    #[error("invalid scenario JSON")]
    Json(#[from] serde_json::Error),
    #[error("invalid chain parameters")]
    Params(#[from] ParamsError),
    #[error("scenario needs at least one miner")]
    NoMiners,
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("node id {0} appears twice")]
    DuplicateNode(u64),
    #[error("node {0}: miners need a positive finite rate")]
    BadRate(u64),
    #[error("delay matrix must be {0} x {0}")]
    DelayMatrix(usize),
    #[error("uniform delay needs lo <= hi")]
    DelayRange,
    #[error("random topology degree must be at least 2")]
    Degree,
    #[error("job {0}: client {1} is not a node")]
    UnknownClient(usize, u64),
    #[error("job {0}: {1}")]
    BadJob(usize, String),
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        if self.duration == 0 {
            return Err(ConfigError::ZeroDuration);
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(ConfigError::DuplicateNode(n.id));
            }
            let rate_ok = n.rate.is_finite() && n.rate >= 0.0;
            if !rate_ok || (n.role == Role::Miner && n.rate <= 0.0) {
                return Err(ConfigError::BadRate(n.id));
            }
        }
        if !self.nodes.iter().any(|n| n.role == Role::Miner) {
            return Err(ConfigError::NoMiners);
        }
        match &self.delay {
            DelayModel::Constant(_) => {}
            DelayModel::Uniform { lo, hi } => {
                if lo > hi {
                    return Err(ConfigError::DelayRange);
                }
            }
            DelayModel::PerLink(m) => {
                let n = self.nodes.len();
                if m.len() != n || m.iter().any(|row| row.len() != n) {
                    return Err(ConfigError::DelayMatrix(n));
                }
            }
        }
        if let Topology::Random { degree } = self.topology {
            if degree < 2 {
                return Err(ConfigError::Degree);
            }
        }
        for (i, j) in self.jobs.iter().enumerate() {
            if !ids.contains(&j.client) {
                return Err(ConfigError::UnknownClient(i, j.client));
            }
            if j.charge == 0 {
                return Err(ConfigError::BadJob(i, "charge must be positive".into()));
            }
            let n = match (&j.tsp.cities, &j.tsp.coords) {
                (Some(n), None) => *n,
                (None, Some(c)) => c.len(),
                _ => {
                    return Err(ConfigError::BadJob(
                        i,
                        "give exactly one of `cities` and `coords`".into(),
                    ))
                }
            };
            if !(MIN_CITIES..=MAX_CITIES).contains(&n) {
                return Err(ConfigError::BadJob(
                    i,
                    format!("city count {n} outside {MIN_CITIES}..={MAX_CITIES}"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"duration": 100, "nodes": [{"id": 1, "rate": 1.0}]}"#;

    #[test]
    fn minimal_scenario_parses() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Faithful);
        assert_eq!(c.delay, DelayModel::Constant(0));
        assert_eq!(c.topology, Topology::FullMesh);
    }

    #[test]
    fn rejects_bad_configs() {
        let no_miner = r#"{"duration": 100, "nodes": [{"id": 1, "role": "client"}]}"#;
        assert!(matches!(
            ScenarioConfig::from_json(no_miner),
            Err(ConfigError::NoMiners)
        ));
        let unknown = r#"{"duration": 100, "nodes": [{"id": 1, "rate": 1.0}], "bogus": 1}"#;
        assert!(matches!(
            ScenarioConfig::from_json(unknown),
            Err(ConfigError::Json(_))
        ));
        let job = r#"{"duration": 100, "nodes": [{"id": 1, "rate": 1.0}],
            "jobs": [{"submit_time": 0, "client": 9, "charge": 5, "tsp": {"cities": 5}}]}"#;
        assert!(matches!(
            ScenarioConfig::from_json(job),
            Err(ConfigError::UnknownClient(0, 9))
        ));
    }
}
