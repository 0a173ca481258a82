//! Training orchestration.
//!
//! A run lays out its output directory as:
//!
//! ```text
//! config.toml            effective configuration
//! metrics.csv            one row per epoch, epoch 0 = pre-training
//! randomization.jsonl    sampled parameters of every training episode
//! checkpoints/epoch-NNNN.ckpt
//! checkpoints/halt.ckpt  written when a loss turns non-finite
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clothrl_core::agent::{Agent, TrainReport};
use clothrl_core::envs::{ClothEnv, ResetDirective, SampledParams};
use clothrl_core::experience::Transition;
use clothrl_core::rng::{derive_seed, stream};
use clothrl_core::Error as CoreError;
use serde::Serialize;

use crate::checkpoint::{self, Checkpoint, Counters};
use crate::config::RunConfig;
use crate::demos::{self, DemoSet};
use crate::error::{HarnessError, Result};
use crate::metrics::{self, MetricsRow};
use crate::rollout::{eval_seed, evaluate, EvalReport, Greedy};

pub const METRICS_FILE: &str = "metrics.csv";
pub const RANDOMIZATION_FILE: &str = "randomization.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Seed of the `index`-th training episode of a run.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    derive_seed(derive_seed(master, stream::ENV), index)
}

pub fn checkpoint_path(output_dir: &Path, epoch: usize) -> PathBuf {
    output_dir.join(CHECKPOINT_DIR).join(format!("epoch-{epoch:04}.ckpt"))
}

#[derive(Serialize)]
struct RandomizationRecord<'a> {
    episode: u64,
    seed: u64,
    reset: &'static str,
    params: &'a SampledParams,
}

#[derive(Default)]
struct LossMeans {
    n_critic: usize,
    n_actor: usize,
    critic_1step: f64,
    critic_nstep: f64,
    actor: f64,
    bc: f64,
    aux: f64,
    demo_fraction: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

impl LossMeans {
    fn add(&mut self, r: &TrainReport) {
        self.n_critic += 1;
        self.critic_1step += mean(&r.critic.loss_1step);
        self.critic_nstep += mean(&r.critic.loss_nstep);
        self.demo_fraction += r.demo_fraction;
        if let Some(a) = &r.actor {
            self.n_actor += 1;
            self.actor += a.loss;
            self.bc += a.bc;
            self.aux += a.aux;
        }
    }

    fn critic(&self, sum: f64) -> Option<f64> {
        (self.n_critic > 0).then(|| sum / self.n_critic as f64)
    }

    fn actor(&self, sum: f64) -> Option<f64> {
        (self.n_actor > 0).then(|| sum / self.n_actor as f64)
    }
}

pub struct Trainer {
    config: RunConfig,
    agent: Agent,
    env: ClothEnv,
    eval_env: ClothEnv,
    counters: Counters,
    started: Instant,
}

impl Trainer {
    fn build(config: RunConfig) -> Result<Self> {
        config.validate()?;
        if config.demo_path.is_none() && config.agent.toggles.pretrain && config.agent.pretrain_steps > 0 {
            return Err(HarnessError::Config("pre-training is enabled but no demo_path is given".into()));
        }
        let agent = Agent::new(config.agent.clone(), config.agent_spec(), config.seed)?;
        let env = ClothEnv::new(config.env.clone())?;
        let eval_env = ClothEnv::new(config.env.clone())?;
        Ok(Self {
            config,
            agent,
            env,
            eval_env,
            counters: Counters::default(),
            started: Instant::now(),
        })
    }

    fn load_demos(&self) -> Result<Option<DemoSet>> {
        let Some(path) = &self.config.demo_path else {
            return Ok(None);
        };
        if !path.exists() {
            return Err(HarnessError::Config(format!("demo file {} does not exist", path.display())));
        }
        let set = demos::load(path)?;
        let spec = self.config.agent_spec();
        if set.task != self.config.task() || set.actor_obs_dim != spec.obs.total() || set.full_state_dim != spec.full_state_dim {
            return Err(HarnessError::Config(format!(
                "demo file {} was recorded for {} with observation widths {}/{}, the run needs {} with {}/{}",
                path.display(),
                set.task.name(),
                set.actor_obs_dim,
                set.full_state_dim,
                self.config.task().name(),
                spec.obs.total(),
                spec.full_state_dim
            )));
        }
        Ok(Some(set))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    /// Fresh run: writes the configuration, loads the demonstrations,
    /// pre-trains and appends the epoch-0 row.
    pub fn start(config: RunConfig) -> Result<Self> {
        let mut t = Self::build(config)?;
        let demos = t.load_demos()?;
        let out = &t.config.output_dir;
        fs::create_dir_all(out.join(CHECKPOINT_DIR)).map_err(|e| HarnessError::io(out, e))?;
        t.config.save(&t.path(CONFIG_FILE))?;
        metrics::create(&t.path(METRICS_FILE))?;
        let rp = t.path(RANDOMIZATION_FILE);
        File::create(&rp).map_err(|e| HarnessError::io(&rp, e))?;
        if let Some(set) = demos {
            for ep in &set.episodes {
                t.agent.store_episode(ep)?;
            }
            t.agent.set_demo_snapshots(set.all_snapshots());
        }
        let budget = if t.agent.buffer().is_empty() { 0 } else { t.agent.pretrain_budget() };
        let mut losses = LossMeans::default();
        for _ in 0..budget {
            let r = t.update()?;
            losses.add(&r);
        }
        let row = t.finish_epoch(&losses)?;
        metrics::append(&t.path(METRICS_FILE), &row)?;
        Ok(t)
    }

    /// Continues from a checkpoint. Rows and randomization records written
    /// after it are dropped, so the files match an uninterrupted run.
    pub fn resume(config: RunConfig, checkpoint: &Path) -> Result<Self> {
        let ck = Checkpoint::load(checkpoint)?;
        ck.check_hash(&config)?;
        let mut t = Self::build(config)?;
        ck.restore(&mut t.agent)?;
        if let Some(set) = t.load_demos()? {
            t.agent.set_demo_snapshots(set.all_snapshots());
        }
        t.counters = ck.counters;
        fs::create_dir_all(t.config.output_dir.join(CHECKPOINT_DIR)).map_err(|e| HarnessError::io(&t.config.output_dir, e))?;
        t.config.save(&t.path(CONFIG_FILE))?;
        metrics::truncate_after(&t.path(METRICS_FILE), t.counters.epoch)?;
        truncate_lines(&t.path(RANDOMIZATION_FILE), t.counters.episodes as usize)?;
        Ok(t)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut Agent {
        &mut self.agent
    }

    pub fn counters(&self) -> Counters {
        Counters {
            wall_time_s: self.wall_time(),
            ..self.counters
        }
    }

    fn wall_time(&self) -> f64 {
        if self.config.wall_clock {
            self.counters.wall_time_s + self.started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.config, &self.agent, self.counters())
    }

    /// One learner update. A non-finite loss saves `halt.ckpt` and stops.
    fn update(&mut self) -> Result<TrainReport> {
        match self.agent.train_step() {
            Ok(r) => Ok(r),
            Err(e @ (CoreError::NonFinite { .. } | CoreError::NonFiniteLoss(_))) => {
                let path = self.config.output_dir.join(CHECKPOINT_DIR).join("halt.ckpt");
                let saved = match self.save_checkpoint(&path) {
                    Ok(()) => format!("state saved to {}", path.display()),
                    Err(se) => format!("saving state failed: {se}"),
                };
                log::error!("halting at epoch {} after {} env steps: {e}", self.counters.epoch, self.counters.env_steps);
                Err(HarnessError::Numeric(format!(
                    "{e} (epoch {}, env step {}); {saved}",
                    self.counters.epoch, self.counters.env_steps
                )))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Noiseless evaluation episodes for the current epoch.
    pub fn evaluate_now(&mut self) -> Result<EvalReport> {
        let n = self.config.eval_episodes as u64;
        let first = self.counters.epoch as u64 * n;
        let master = self.config.seed;
        evaluate(&mut self.eval_env, &mut Greedy(&mut self.agent), (first..first + n).map(|i| eval_seed(master, i)))
    }

    fn finish_epoch(&mut self, losses: &LossMeans) -> Result<MetricsRow> {
        let eval = self.evaluate_now()?;
        Ok(MetricsRow {
            epoch: self.counters.epoch,
            env_steps: self.counters.env_steps,
            critic_1step: losses.critic(losses.critic_1step),
            critic_nstep: losses.critic(losses.critic_nstep),
            actor: losses.actor(losses.actor),
            bc: losses.actor(losses.bc),
            aux: losses.actor(losses.aux),
            eval_return: eval.mean_return(),
            eval_success: eval.success_rate(),
            buffer_occupancy: self.agent.buffer().len(),
            demo_fraction: losses.critic(losses.demo_fraction).unwrap_or(0.0),
            wall_time_s: self.wall_time(),
        })
    }

    fn log_reset(&self, seed: u64, directive: &ResetDirective) -> Result<()> {
        let rec = RandomizationRecord {
            episode: self.counters.episodes,
            seed,
            reset: match directive {
                ResetDirective::Standard => "standard",
                ResetDirective::Snapshot(_) => "demo",
            },
            params: self.env.params(),
        };
        let path = self.path(RANDOMIZATION_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).map_err(|e| HarnessError::io(&path, e))?;
        let line = serde_json::to_string(&rec).map_err(|e| HarnessError::Format(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| HarnessError::io(&path, e))
    }

    /// Collects at least `steps_per_epoch` environment steps with the noisy
    /// policy, finishing the last episode, with one update per step once the
    /// buffer holds a full batch; then evaluates.
    pub fn run_epoch(&mut self) -> Result<MetricsRow> {
        let mut losses = LossMeans::default();
        let mut collected = 0;
        while collected < self.config.steps_per_epoch {
            let directive = self.agent.begin_episode();
            let seed = episode_seed(self.config.seed, self.counters.episodes);
            let mut obs = self.env.reset(seed, &directive)?;
            self.log_reset(seed, &directive)?;
            self.counters.episodes += 1;
            let mut episode = Vec::new();
            loop {
                let actor_obs = obs.actor_obs();
                let action = self.agent.select_action(&actor_obs, true)?;
                let r = self.env.step(&action)?;
                episode.push(Transition {
                    actor_obs,
                    full_state: obs.full_state,
                    action,
                    reward: r.reward,
                    next_actor_obs: r.obs.actor_obs(),
                    next_full_state: r.obs.full_state.clone(),
                    done: r.info.success || r.info.unstable,
                    is_demo: false,
                });
                collected += 1;
                self.counters.env_steps += 1;
                if self.agent.buffer().len() >= self.config.agent.batch_size {
                    let rep = self.update()?;
                    losses.add(&rep);
                }
                obs = r.obs;
                if r.done {
                    break;
                }
            }
            self.agent.store_episode(&episode)?;
        }
        self.counters.epoch += 1;
        self.finish_epoch(&losses)
    }

    /// Runs the remaining epochs, appending rows and writing checkpoints;
    /// the last epoch is always checkpointed.
    pub fn run(&mut self) -> Result<()> {
        let metrics_path = self.path(METRICS_FILE);
        while self.counters.epoch < self.config.epochs {
            let row = self.run_epoch()?;
            metrics::append(&metrics_path, &row)?;
            log::info!(
                "epoch {} env_steps {} eval_success {} buffer {}",
                row.epoch,
                row.env_steps,
                row.eval_success.map_or("-".into(), |s| format!("{s:.2}")),
                row.buffer_occupancy
            );
            let every = self.config.checkpoint_every;
            if every > 0 && self.counters.epoch.is_multiple_of(every) && self.counters.epoch < self.config.epochs {
                self.save_checkpoint(&checkpoint_path(&self.config.output_dir, self.counters.epoch))?;
            }
        }
        self.save_checkpoint(&checkpoint_path(&self.config.output_dir, self.counters.epoch))
    }
}

fn truncate_lines(path: &Path, keep: usize) -> Result<()> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let lines = BufReader::new(f).lines().take(keep).collect::<std::io::Result<Vec<_>>>().map_err(|e| HarnessError::io(path, e))?;
    if lines.len() < keep {
        return Err(HarnessError::Format(format!("{} has {} records, the checkpoint expects {keep}", path.display(), lines.len())));
    }
    let mut text = lines.join("\n");
    if keep > 0 {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Starts a run and trains it to `config.epochs`.
pub fn run_training(config: RunConfig) -> Result<Trainer> {
    let mut t = Trainer::start(config)?;
    t.run()?;
    Ok(t)
}

/// Continues a run from `checkpoint` to `config.epochs`.
pub fn resume_training(config: RunConfig, checkpoint: &Path) -> Result<Trainer> {
    let mut t = Trainer::resume(config, checkpoint)?;
    t.run()?;
    Ok(t)
}

/// Loads a checkpoint's networks into an agent built from `config` and
/// evaluates it on `episodes` randomized resets.
pub fn run_eval(config: &RunConfig, checkpoint: &Path, episodes: usize, seed: u64) -> Result<EvalReport> {
    config.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut agent = Agent::new(config.agent.clone(), config.agent_spec(), config.seed)?;
    ck.restore_networks(&mut agent)?;
    let mut env = ClothEnv::new(config.env.clone())?;
    evaluate(&mut env, &mut Greedy(&mut agent), (0..episodes as u64).map(|i| eval_seed(seed, i)))
}
