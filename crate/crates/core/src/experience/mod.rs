//! Replay storage: transitions, N-step segments and the prioritized buffer.

mod buffer;
mod nstep;
mod sum_tree;

pub use buffer::{BufferConfig, BufferState, PrioritizedBuffer, SampleBatch, SampleIndex, SlotState};
pub use nstep::{assemble_episode, assemble_nstep};
pub use sum_tree::{MaxTree, SumTree};

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub const ACTION_DIM: usize = 4;

/// Reward granted on task success.
pub const SUCCESS_REWARD: f64 = 100.0;

/// One environment step.
///
/// `done` marks a terminal step (success or aborted simulation). An episode
/// cut by its step budget ends without a terminal flag so the learner keeps
/// bootstrapping through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub actor_obs: Vec<f64>,
    pub full_state: Vec<f64>,
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub next_actor_obs: Vec<f64>,
    pub next_full_state: Vec<f64>,
    pub done: bool,
    pub is_demo: bool,
}

/// A transition together with its N-step continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStepSegment {
    pub head: Transition,
    /// `sum_{i<k} gamma^i r_{t+i}`
    pub discounted_return: f64,
    /// Number of steps `k` summed, `1..=N`.
    pub horizon: usize,
    /// Per-step rewards that make up `discounted_return`.
    pub rewards: Vec<f64>,
    pub tail_actor_obs: Vec<f64>,
    pub tail_full_state: Vec<f64>,
    pub tail_done: bool,
}

impl NStepSegment {
    /// Segment with horizon one, i.e. the plain transition.
    pub fn single(head: Transition) -> Self {
        Self {
            discounted_return: head.reward,
            horizon: 1,
            rewards: alloc::vec![head.reward],
            tail_actor_obs: head.next_actor_obs.clone(),
            tail_full_state: head.next_full_state.clone(),
            tail_done: head.done,
            head,
        }
    }

    pub fn is_demo(&self) -> bool {
        self.head.is_demo
    }
}
