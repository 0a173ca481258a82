use alloc::vec::Vec;

use super::{NStepSegment, Transition};
use crate::{Error, Result};

/// Build the N-step segment starting at step `t` of a closed episode.
///
/// The window stops early at a terminal transition or at the end of the
/// episode; `tail_done` reports whether it stopped on a terminal step.
pub fn assemble_nstep(episode: &[Transition], t: usize, n: usize, gamma: f64) -> Result<NStepSegment> {
    if t >= episode.len() {
        return Err(Error::Index {
            index: t,
            len: episode.len(),
        });
    }
    if n == 0 {
        return Err(Error::Parameter("n-step horizon must be at least 1".into()));
    }
    let mut rewards = Vec::with_capacity(n);
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut last = t;
    for (i, tr) in episode[t..].iter().take(n).enumerate() {
        ret += discount * tr.reward;
        discount *= gamma;
        rewards.push(tr.reward);
        last = t + i;
        if tr.done {
            break;
        }
    }
    let tail = &episode[last];
    Ok(NStepSegment {
        head: episode[t].clone(),
        discounted_return: ret,
        horizon: last - t + 1,
        rewards,
        tail_actor_obs: tail.next_actor_obs.clone(),
        tail_full_state: tail.next_full_state.clone(),
        tail_done: tail.done,
    })
}

/// Segments for every step of a closed episode, in order.
pub fn assemble_episode(episode: &[Transition], n: usize, gamma: f64) -> Result<Vec<NStepSegment>> {
    (0..episode.len())
        .map(|t| assemble_nstep(episode, t, n, gamma))
        .collect()
}
