//! Replay buffer contents as container entries.

use clothrl_core::experience::{BufferConfig, BufferState, NStepSegment, SlotState, Transition};

use crate::container::Container;
use crate::error::{HarnessError, Result};

const SCALARS: usize = 9;

fn bad(msg: &str) -> HarnessError {
    HarnessError::Format(format!("replay buffer: {msg}"))
}

/// Stores `state` under `prefix.*`. Occupied slots are packed in slot order;
/// per-step rewards are concatenated.
pub fn write_buffer(c: &mut Container, prefix: &str, state: &BufferState) {
    let cfg = &state.config;
    let occupied: Vec<&SlotState> = state.slots.iter().flatten().collect();
    let (od, sd) = occupied.first().map_or((0, 0), |s| (s.segment.head.actor_obs.len(), s.segment.head.full_state.len()));
    c.push_vector(
        &format!("{prefix}.config"),
        vec![
            cfg.capacity as f64,
            cfg.alpha,
            cfg.beta,
            cfg.epsilon,
            cfg.demo_boost,
            cfg.constant_demo_bonus.is_some() as u8 as f64,
            cfg.constant_demo_bonus.unwrap_or(0.0),
        ],
    );
    c.push_vector(
        &format!("{prefix}.counters"),
        vec![state.next_generation as f64, state.stale_updates as f64, state.slots.len() as f64, od as f64, sd as f64],
    );
    c.push_vector(&format!("{prefix}.present"), state.slots.iter().map(|s| s.is_some() as u8 as f64).collect());
    c.push_vector(&format!("{prefix}.fifo"), state.fifo.iter().map(|&i| i as f64).collect());
    let mut scalars = Vec::with_capacity(occupied.len() * SCALARS);
    let mut obs = Vec::with_capacity(occupied.len() * 3 * od);
    let mut full = Vec::with_capacity(occupied.len() * 3 * sd);
    let mut actions = Vec::with_capacity(occupied.len() * 4);
    let mut rewards = Vec::new();
    for s in &occupied {
        let seg = &s.segment;
        let h = &seg.head;
        scalars.extend_from_slice(&[
            s.priority,
            s.generation as f64,
            h.reward,
            h.done as u8 as f64,
            h.is_demo as u8 as f64,
            seg.discounted_return,
            seg.horizon as f64,
            seg.tail_done as u8 as f64,
            seg.rewards.len() as f64,
        ]);
        for v in [&h.actor_obs, &h.next_actor_obs, &seg.tail_actor_obs] {
            obs.extend_from_slice(v);
        }
        for v in [&h.full_state, &h.next_full_state, &seg.tail_full_state] {
            full.extend_from_slice(v);
        }
        actions.extend_from_slice(&h.action);
        rewards.extend_from_slice(&seg.rewards);
    }
    c.push_vector(&format!("{prefix}.scalars"), scalars);
    c.push_vector(&format!("{prefix}.obs"), obs);
    c.push_vector(&format!("{prefix}.full_state"), full);
    c.push_vector(&format!("{prefix}.actions"), actions);
    c.push_vector(&format!("{prefix}.rewards"), rewards);
}

fn as_count(x: f64, what: &str) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 {
        Ok(x as usize)
    } else {
        Err(bad(&format!("{what} is not a count: {x}")))
    }
}

fn flag(x: f64) -> Result<bool> {
    match x {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(bad(&format!("expected 0 or 1, got {x}"))),
    }
}

pub fn read_buffer(c: &Container, prefix: &str) -> Result<BufferState> {
    let v = |name: &str| c.vector(&format!("{prefix}.{name}"));
    let cfg = v("config")?;
    let counters = v("counters")?;
    if cfg.len() != 7 || counters.len() != 5 {
        return Err(bad("header arrays have the wrong length"));
    }
    let config = BufferConfig {
        capacity: as_count(cfg[0], "capacity")?,
        alpha: cfg[1],
        beta: cfg[2],
        epsilon: cfg[3],
        demo_boost: cfg[4],
        constant_demo_bonus: flag(cfg[5])?.then_some(cfg[6]),
    };
    let n_slots = as_count(counters[2], "slot count")?;
    let od = as_count(counters[3], "observation width")?;
    let sd = as_count(counters[4], "state width")?;
    let present = v("present")?;
    if present.len() != n_slots {
        return Err(bad("presence mask length"));
    }
    let n = present.iter().filter(|&&p| p == 1.0).count();
    let scalars = v("scalars")?;
    let obs = v("obs")?;
    let full = v("full_state")?;
    let actions = v("actions")?;
    let rewards = v("rewards")?;
    if scalars.len() != n * SCALARS || obs.len() != n * 3 * od || full.len() != n * 3 * sd || actions.len() != n * 4 {
        return Err(bad("payload sizes do not match the slot count"));
    }
    let mut slots = Vec::with_capacity(n_slots);
    let (mut k, mut r) = (0, 0);
    for &p in present {
        if !flag(p)? {
            slots.push(None);
            continue;
        }
        let s = &scalars[k * SCALARS..(k + 1) * SCALARS];
        let o = &obs[k * 3 * od..(k + 1) * 3 * od];
        let f = &full[k * 3 * sd..(k + 1) * 3 * sd];
        let nr = as_count(s[8], "reward count")?;
        let seg_rewards = rewards.get(r..r + nr).ok_or_else(|| bad("reward list too short"))?.to_vec();
        r += nr;
        let mut action = [0.0; 4];
        action.copy_from_slice(&actions[k * 4..(k + 1) * 4]);
        slots.push(Some(SlotState {
            priority: s[0],
            generation: as_count(s[1], "generation")? as u64,
            segment: NStepSegment {
                head: Transition {
                    actor_obs: o[..od].to_vec(),
                    full_state: f[..sd].to_vec(),
                    action,
                    reward: s[2],
                    next_actor_obs: o[od..2 * od].to_vec(),
                    next_full_state: f[sd..2 * sd].to_vec(),
                    done: flag(s[3])?,
                    is_demo: flag(s[4])?,
                },
                discounted_return: s[5],
                horizon: as_count(s[6], "horizon")?,
                rewards: seg_rewards,
                tail_actor_obs: o[2 * od..].to_vec(),
                tail_full_state: f[2 * sd..].to_vec(),
                tail_done: flag(s[7])?,
            },
        }));
        k += 1;
    }
    if r != rewards.len() {
        return Err(bad("unused rewards"));
    }
    let fifo = v("fifo")?.iter().map(|&x| as_count(x, "queue entry")).collect::<Result<_>>()?;
    Ok(BufferState {
        config,
        slots,
        fifo,
        next_generation: as_count(counters[0], "generation counter")? as u64,
        stale_updates: as_count(counters[1], "stale counter")? as u64,
    })
}
