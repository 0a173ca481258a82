//! Episode rollouts: evaluation, demonstration recording and frame dumps.

use std::fs;
use std::path::Path;

use clothrl_core::agent::Agent;
use clothrl_core::envs::{full_state, run_scripted_episode, ClothEnv, EnvConfig, ObservationBundle, ResetDirective, ScriptedDemo};
use clothrl_core::experience::SUCCESS_REWARD;
use clothrl_core::rng::{derive_seed, stream};
use serde::Serialize;

use crate::demos::DemoSet;
use crate::error::{HarnessError, Result};

/// Consecutive scripted failures after which recording gives up.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10;

pub trait Policy {
    /// Called before every episode.
    fn reset(&mut self) {}
    fn act(&mut self, env: &ClothEnv, obs: &ObservationBundle) -> Result<[f64; 4]>;
}

/// The agent's actor without exploration noise. Acting this way touches
/// neither the replay buffer nor any random stream.
pub struct Greedy<'a>(pub &'a mut Agent);

impl Policy for Greedy<'_> {
    fn act(&mut self, _env: &ClothEnv, obs: &ObservationBundle) -> Result<[f64; 4]> {
        Ok(self.0.select_action(&obs.actor_obs(), false)?)
    }
}

#[derive(Default)]
pub struct Scripted(ScriptedDemo);

impl Policy for Scripted {
    fn reset(&mut self) {
        self.0 = ScriptedDemo::new();
    }

    fn act(&mut self, env: &ClothEnv, _obs: &ObservationBundle) -> Result<[f64; 4]> {
        Ok(self.0.act(env))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub steps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeLog>,
}

impl EvalReport {
    /// `None` when no episode was run.
    pub fn success_rate(&self) -> Option<f64> {
        self.mean(|e| e.success as u8 as f64)
    }

    pub fn mean_return(&self) -> Option<f64> {
        self.mean(|e| e.ret)
    }

    fn mean(&self, f: impl Fn(&EpisodeLog) -> f64) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        Some(self.episodes.iter().map(f).sum::<f64>() / self.episodes.len() as f64)
    }
}

/// Seed of the `index`-th evaluation episode of a run.
pub fn eval_seed(master: u64, index: u64) -> u64 {
    derive_seed(derive_seed(master, stream::EVAL), index)
}

/// Runs one episode from a randomized reset; `on_step` sees the environment
/// after the reset and after every step.
pub fn run_episode(env: &mut ClothEnv, policy: &mut dyn Policy, seed: u64, mut on_step: impl FnMut(&ClothEnv) -> Result<()>) -> Result<EpisodeLog> {
    policy.reset();
    let mut obs = env.reset(seed, &ResetDirective::Standard)?;
    on_step(env)?;
    let mut log = EpisodeLog {
        seed,
        steps: 0,
        ret: 0.0,
        success: false,
    };
    loop {
        let a = policy.act(env, &obs)?;
        let r = env.step(&a)?;
        on_step(env)?;
        log.steps += 1;
        log.ret += r.reward;
        log.success |= r.info.success;
        obs = r.obs;
        if r.done {
            return Ok(log);
        }
    }
}

pub fn evaluate(env: &mut ClothEnv, policy: &mut dyn Policy, seeds: impl IntoIterator<Item = u64>) -> Result<EvalReport> {
    let episodes = seeds.into_iter().map(|s| run_episode(env, policy, s, |_| Ok(()))).collect::<Result<_>>()?;
    Ok(EvalReport { episodes })
}

/// Seed of the `attempt`-th scripted recording attempt.
pub fn demo_seed(master: u64, attempt: u64) -> u64 {
    derive_seed(derive_seed(master, stream::DEMOS), attempt)
}

/// Records `count` successful scripted episodes with per-step snapshots.
/// Failed attempts are discarded and re-rolled with the next seed.
pub fn record_demos(env_config: &EnvConfig, count: usize, seed: u64) -> Result<DemoSet> {
    let mut env = ClothEnv::new(env_config.clone())?;
    let mut set = DemoSet::new(env_config.task, env.layout().total(), full_state::DIM);
    let (mut attempt, mut failures) = (0u64, 0usize);
    while set.episodes.len() < count {
        let s = demo_seed(seed, attempt);
        attempt += 1;
        let ep = run_scripted_episode(&mut env, s, true)?;
        let last = ep.transitions.last().map_or(0.0, |t| t.reward);
        if ep.success && last == SUCCESS_REWARD {
            failures = 0;
            set.episodes.push(ep.transitions);
            set.snapshots.push(ep.snapshots);
            continue;
        }
        failures += 1;
        log::warn!("scripted episode with seed {s} failed after {} steps", ep.transitions.len());
        if failures >= MAX_CONSECUTIVE_FAILURES {
            return Err(HarnessError::Demos(format!(
                "{failures} consecutive scripted failures on {} (last seed {s}, {} of {count} recorded)",
                env_config.task.name(),
                set.episodes.len()
            )));
        }
    }
    Ok(set)
}

/// Writes `frame_000.png` for the reset state and one frame per step.
pub fn render_episode(env: &mut ClothEnv, policy: &mut dyn Policy, seed: u64, out_dir: &Path) -> Result<EpisodeLog> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut index = 0usize;
    run_episode(env, policy, seed, |env| {
        let frame = env.render_frame()?;
        let path = out_dir.join(format!("frame_{index:03}.png"));
        index += 1;
        image::save_buffer(&path, &frame.to_rgb8(), frame.width as u32, frame.height as u32, image::ExtendedColorType::Rgb8)
            .map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
    })
}
