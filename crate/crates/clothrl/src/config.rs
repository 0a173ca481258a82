//! Run configuration (TOML) and ablation presets.

use std::fs;
use std::path::{Path, PathBuf};

use clothrl_core::agent::{AgentConfig, AgentSpec, Toggles};
use clothrl_core::envs::{aux_indices, full_state, EnvConfig, ObsLayout, Task};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Label only; presets are applied when a config is created.
    pub preset: String,
    pub seed: u64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub eval_episodes: usize,
    /// Checkpoint after every this many epochs; 0 checkpoints only at the end.
    pub checkpoint_every: usize,
    pub demo_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Record elapsed seconds in the metrics; off keeps metrics reproducible.
    pub wall_clock: bool,
    pub agent: AgentConfig,
    pub env: EnvConfig,
}

impl RunConfig {
    pub fn new(task: Task, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            preset: Preset::Ours.name().into(),
            seed: 0,
            epochs: 80,
            steps_per_epoch: 1000,
            eval_episodes: 2,
            checkpoint_every: 10,
            demo_path: None,
            output_dir: output_dir.into(),
            wall_clock: false,
            agent: AgentConfig::default(),
            env: EnvConfig::new(task),
        }
    }

    pub fn task(&self) -> Task {
        self.env.task
    }

    pub fn agent_spec(&self) -> AgentSpec {
        agent_spec(&self.env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.steps_per_epoch == 0 {
            return Err(HarnessError::Config("steps_per_epoch must be positive".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(HarnessError::Config("seed must fit in a signed 64-bit integer".into()));
        }
        self.agent.validate().map_err(|e| HarnessError::Config(format!("agent: {e}")))?;
        self.env.validate().map_err(|e| HarnessError::Config(format!("env: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<u32>,
        }
        let v: Version = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        match v.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(other) => return Err(HarnessError::Config(format!("schema_version {other} is not supported (expected {SCHEMA_VERSION})"))),
            None => return Err(HarnessError::Config("schema_version is missing".into())),
        }
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| HarnessError::io(path, e))
    }

    /// Hash of everything that shapes the learning trajectory. Run length,
    /// output location, checkpoint cadence and wall-clock logging are left
    /// out so a run can be resumed with more epochs or in another directory.
    pub fn hash(&self) -> Result<u32> {
        let mut c = self.clone();
        c.epochs = 0;
        c.checkpoint_every = 0;
        c.output_dir = PathBuf::new();
        c.wall_clock = false;
        Ok(crc32fast::hash(c.to_toml()?.as_bytes()))
    }
}

pub fn agent_spec(env: &EnvConfig) -> AgentSpec {
    AgentSpec {
        obs: ObsLayout::of(env),
        full_state_dim: full_state::DIM,
        aux_indices: aux_indices(env.task),
    }
}

/// The compared variants: the full method, one ablation per extension, and
/// plain DDPG without demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ours,
    NoTwinCritic,
    NoPretrain,
    NoBc,
    NoAux,
    NoDemoPriorityBoost,
    NoResetToDemo,
    NoLowdimActorInput,
    NoNstep,
    Ddpg,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Ours,
        Preset::NoTwinCritic,
        Preset::NoPretrain,
        Preset::NoBc,
        Preset::NoAux,
        Preset::NoDemoPriorityBoost,
        Preset::NoResetToDemo,
        Preset::NoLowdimActorInput,
        Preset::NoNstep,
        Preset::Ddpg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ours => "ours",
            Preset::NoTwinCritic => "no-twin-critic",
            Preset::NoPretrain => "no-pretrain",
            Preset::NoBc => "no-bc",
            Preset::NoAux => "no-aux",
            Preset::NoDemoPriorityBoost => "no-demo-priority-boost",
            Preset::NoResetToDemo => "no-reset-to-demo",
            Preset::NoLowdimActorInput => "no-lowdim-actor-input",
            Preset::NoNstep => "no-nstep",
            Preset::Ddpg => "ddpg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        cfg.preset = self.name().into();
        let a = &mut cfg.agent;
        match self {
            Preset::Ours => {}
            Preset::NoTwinCritic => a.toggles.twin_critic = false,
            Preset::NoPretrain => a.toggles.pretrain = false,
            Preset::NoBc => a.lambda_bc = 0.0,
            Preset::NoAux => a.toggles.aux_outputs = false,
            Preset::NoDemoPriorityBoost => a.buffer.demo_boost = 0.0,
            Preset::NoResetToDemo => a.toggles.reset_demo = false,
            Preset::NoLowdimActorInput => cfg.env.actor_gripper_position = false,
            Preset::NoNstep => a.toggles.nstep = false,
            Preset::Ddpg => {
                a.toggles = Toggles::ALL_OFF;
                a.target_delay = 1;
                a.reset_demo_prob = 0.0;
                a.pretrain_steps = 0;
                cfg.demo_path = None;
            }
        }
    }
}
