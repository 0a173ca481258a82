#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clothrl::rollout::record_demos;
use clothrl::{demos, RunConfig};
use clothrl_core::envs::{EnvConfig, Task};

pub const TASK: Task = Task::DiagonalFolding;

/// Records `n` scripted demonstrations into `dir/demos.txt`.
pub fn demo_file(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("demos.txt");
    let set = record_demos(&EnvConfig::new(TASK), n, 0).unwrap();
    demos::save(&set, &path).unwrap();
    path
}

/// A run small enough to finish an epoch in about a second.
pub fn small_run(out: &Path, demo_path: &Path, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::new(TASK, out);
    cfg.demo_path = Some(demo_path.to_path_buf());
    cfg.epochs = epochs;
    cfg.steps_per_epoch = 150;
    cfg.eval_episodes = 2;
    cfg.checkpoint_every = 1;
    cfg.seed = 5;
    let a = &mut cfg.agent;
    a.critic_hidden = vec![32, 32];
    a.actor_hidden = vec![32, 32];
    a.batch_size = 16;
    a.pretrain_steps = 40;
    a.buffer.capacity = 10_000;
    cfg
}
