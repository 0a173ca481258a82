//! File formats, orchestration and the command-line tool for `clothrl-core`.
//!
//! - [`config`]: the TOML run configuration and the ablation presets.
//! - [`container`]: the checksummed binary container behind checkpoints and snapshots.
//! - [`demos`]: demonstration files.
//! - [`harness`]: training runs, resumption and evaluation.
//! - [`metrics`]: the per-epoch CSV.
//! - [`rollout`]: episode rollouts, scripted recording and frame dumps.

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod demos;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod replay;
pub mod rollout;

pub use config::{Preset, RunConfig};
pub use error::{HarnessError, Result};
