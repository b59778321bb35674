//! Run configuration: a TOML file with `[world]`, `[graph]`, `[ppo]`, and
//! `[run]` sections. Every key has a default, so an empty file is a valid,
//! fully-specified configuration; unknown keys are hard errors.

use serde::{Deserialize, Serialize};

use crate::marl::{CriticMode, PpoConfig};
use crate::obsgraph::InfoMode;
use crate::world::WorldConfig;

/// Observation regime the policy is built around.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    /// Ego-relative entity graphs through the message-passing encoder.
    Graph,
    /// Flat local observation only (no encoder).
    Local,
    /// Flat concatenation of every other entity (no encoder).
    Global,
    /// Flat fixed-capacity neighborhood listing (no encoder).
    Neighborhood,
}

/// `[graph]` section: observation construction and critic wiring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub mode: ObsMode,
    /// Sensing radius for graph edges (graph mode).
    pub rho: f64,
    /// Neighborhood radius (neighborhood mode).
    pub nbd_dist: f64,
    /// Neighborhood capacity (neighborhood mode).
    pub max_nbd_entities: usize,
    pub critic: CriticMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            mode: ObsMode::Graph,
            rho: 1.0,
            nbd_dist: 1.0,
            max_nbd_entities: 5,
            critic: CriticMode::Pooled,
        }
    }
}

/// `[run]` section: training budget, evaluation cadence, and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Total environment steps per seed (each parallel environment counts).
    pub total_steps: u64,
    /// Environment steps between evaluation points.
    pub eval_interval: u64,
    /// Episodes per evaluation point (the final report always uses 100).
    pub eval_episodes: usize,
    /// Parallel environments.
    pub num_envs: usize,
    /// Steps collected per environment between updates.
    pub buffer_len: usize,
    /// Training seeds; experiments run each in turn.
    pub seeds: Vec<u64>,
    /// Output directory for curves, checkpoints, and reports.
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            total_steps: 5_000_000,
            eval_interval: 50_000,
            eval_episodes: 20,
            num_envs: 128,
            buffer_len: 25,
            seeds: vec![0, 1, 2],
            out_dir: "runs/swarm".into(),
        }
    }
}

/// Complete training configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub world: WorldConfig,
    pub graph: GraphConfig,
    pub ppo: PpoConfig,
    pub run: RunConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl TrainConfig {
    /// Parse from TOML text and validate.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: TrainConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a TOML file and validate.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to TOML (used by manifests and checkpoints).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// The flat-observation mode this config selects, if it is not graph
    /// mode.
    pub fn info_mode(&self) -> Option<InfoMode> {
        match self.graph.mode {
            ObsMode::Graph => None,
            ObsMode::Local => Some(InfoMode::Local),
            ObsMode::Global => Some(InfoMode::Global),
            ObsMode::Neighborhood => Some(InfoMode::Neighborhood {
                nbd_dist: self.graph.nbd_dist,
                max_nbd_entities: self.graph.max_nbd_entities,
            }),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::world::validate(&self.world).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo.validate().map_err(ConfigError::Invalid)?;
        if self.graph.rho <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "graph.rho must be positive, got {}",
                self.graph.rho
            )));
        }
        if let Some(mode) = self.info_mode() {
            mode.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if matches!(mode, crate::obsgraph::InfoMode::Global)
                && matches!(self.world.n_obstacles, crate::world::ObstacleCount::Range { .. })
            {
                return Err(ConfigError::Invalid(
                    "global observations have a width fixed by the entity count; \
                     use a fixed obstacle count"
                        .into(),
                ));
            }
        }
        let r = &self.run;
        if r.total_steps == 0 {
            return Err(ConfigError::Invalid("run.total_steps must be positive".into()));
        }
        if r.seeds.is_empty() {
            return Err(ConfigError::Invalid("run.seeds must contain at least one seed".into()));
        }
        if r.num_envs == 0 || r.buffer_len == 0 {
            return Err(ConfigError::Invalid(
                "run.num_envs and run.buffer_len must be positive".into(),
            ));
        }
        if r.eval_interval == 0 {
            return Err(ConfigError::Invalid("run.eval_interval must be positive".into()));
        }
        if r.eval_episodes == 0 {
            return Err(ConfigError::Invalid("run.eval_episodes must be positive".into()));
        }
        Ok(())
    }
}
