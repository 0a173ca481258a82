//! Training checkpoints.
//!
//! A checkpoint is a [`Container`] holding the agent's parameters and
//! optimizer moments (`actor.*`, `critic*.*`, `adam.*`, `agent.counters`), the
//! replay buffer (`buffer.*`), the three agent random streams (`rng.0..2`),
//! harness counters and the run configuration with its hash.

use std::path::Path;

use clothrl_core::agent::Agent;
use clothrl_core::approximator::NamedArray;
use clothrl_core::experience::PrioritizedBuffer;
use clothrl_core::rng::RngState;

use crate::config::RunConfig;
use crate::container::Container;
use crate::error::{HarnessError, Result};
use crate::replay;

/// Harness position at the time of saving.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counters {
    pub epoch: usize,
    pub env_steps: u64,
    pub episodes: u64,
    pub wall_time_s: f64,
}

pub struct Checkpoint {
    pub config: RunConfig,
    pub config_hash: u32,
    pub counters: Counters,
    container: Container,
}

pub fn save(path: &Path, config: &RunConfig, agent: &Agent, counters: Counters) -> Result<()> {
    let mut c = Container::new();
    c.push_bytes("meta.config_hash", config.hash()?.to_le_bytes().to_vec());
    c.push_bytes("meta.config", config.to_toml()?.into_bytes());
    c.push_vector(
        "harness.counters",
        vec![counters.epoch as f64, counters.env_steps as f64, counters.episodes as f64, counters.wall_time_s],
    );
    for (i, s) in agent.rng_states().iter().enumerate() {
        c.push_bytes(&format!("rng.{i}"), s.to_bytes().to_vec());
    }
    c.push_arrays(agent.named_arrays());
    replay::write_buffer(&mut c, "buffer", &agent.buffer().export_state());
    c.save(path)
}

fn count(x: f64) -> Result<u64> {
    if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 {
        Ok(x as u64)
    } else {
        Err(HarnessError::Format(format!("checkpoint counter is not a count: {x}")))
    }
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let container = Container::load(path)?;
        let hash = container.bytes("meta.config_hash")?;
        let config_hash = u32::from_le_bytes(hash.try_into().map_err(|_| HarnessError::Format("config hash is not 4 bytes".into()))?);
        let text = std::str::from_utf8(container.bytes("meta.config")?).map_err(|_| HarnessError::Format("stored config is not UTF-8".into()))?;
        let config = RunConfig::from_toml(text)?;
        let v = container.vector("harness.counters")?;
        if v.len() != 4 {
            return Err(HarnessError::Format("harness counters have the wrong length".into()));
        }
        let counters = Counters {
            epoch: count(v[0])? as usize,
            env_steps: count(v[1])?,
            episodes: count(v[2])?,
            wall_time_s: v[3],
        };
        Ok(Self {
            config,
            config_hash,
            counters,
            container,
        })
    }

    /// Refuses to continue a run whose configuration differs from the one
    /// the checkpoint was written under.
    pub fn check_hash(&self, config: &RunConfig) -> Result<()> {
        let current = config.hash()?;
        if current != self.config_hash {
            return Err(HarnessError::Checkpoint(format!(
                "config hash {current:08x} does not match the checkpoint's {:08x}; only epochs, output_dir, checkpoint_every and wall_clock may change on resume",
                self.config_hash
            )));
        }
        Ok(())
    }

    /// Network parameters and optimizer state; fails on a topology mismatch.
    pub fn restore_networks(&self, agent: &mut Agent) -> Result<()> {
        let arrays: Vec<NamedArray> = self
            .container
            .arrays()
            .into_iter()
            .filter(|a| !a.name.starts_with("buffer.") && !a.name.starts_with("harness."))
            .collect();
        agent.load_named_arrays(&arrays).map_err(|e| HarnessError::Checkpoint(format!("parameters do not fit the configured networks: {e}")))
    }

    /// Everything: networks, optimizer, buffer and random streams.
    pub fn restore(&self, agent: &mut Agent) -> Result<()> {
        self.restore_networks(agent)?;
        let state = replay::read_buffer(&self.container, "buffer")?;
        agent.set_buffer(PrioritizedBuffer::from_state(state)?);
        let mut rngs = [RngState::from_bytes(&[0; 56]); 3];
        for (i, r) in rngs.iter_mut().enumerate() {
            let b = self.container.bytes(&format!("rng.{i}"))?;
            *r = RngState::from_bytes(b.try_into().map_err(|_| HarnessError::Format(format!("rng.{i} is not 56 bytes")))?);
        }
        agent.set_rng_states(&rngs);
        Ok(())
    }
}
