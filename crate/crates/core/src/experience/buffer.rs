use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MaxTree, NStepSegment, SumTree};
use crate::math::powf;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub capacity: usize,
    /// Prioritization exponent; 0 gives uniform sampling.
    pub alpha: f64,
    /// Importance-sampling correction exponent.
    pub beta: f64,
    /// Priority floor added to every update.
    pub epsilon: f64,
    /// Demonstration boost, proportional to the largest combined loss in the minibatch.
    pub demo_boost: f64,
    /// Fixed additive demonstration bonus. Off unless set explicitly.
    #[serde(default)]
    pub constant_demo_bonus: Option<f64>,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            capacity: 1_000_000,
            alpha: 0.6,
            beta: 0.4,
            epsilon: 1e-6,
            demo_boost: 0.1,
            constant_demo_bonus: None,
        }
    }
}

/// Handle to a sampled entry. The generation detects entries evicted between
/// sampling and the priority update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleIndex {
    pub slot: usize,
    pub generation: u64,
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub indices: Vec<SampleIndex>,
    pub segments: Vec<NStepSegment>,
    /// Sampling probabilities `P(i)`.
    pub probabilities: Vec<f64>,
    /// Importance weights, divided by the batch maximum.
    pub is_weights: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn demo_fraction(&self) -> f64 {
        if self.segments.is_empty() {
            return 0.0;
        }
        self.segments.iter().filter(|s| s.is_demo()).count() as f64 / self.segments.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slot {
    segment: NStepSegment,
    priority: f64,
    generation: u64,
}

/// Fixed-capacity prioritized store. Demonstrations are pinned; other entries
/// are evicted first-in first-out once the buffer is full.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    config: BufferConfig,
    slots: Vec<Option<Slot>>,
    sums: SumTree,
    maxes: MaxTree,
    fifo: VecDeque<usize>,
    demo_count: usize,
    next_generation: u64,
    stale_updates: u64,
}

impl PrioritizedBuffer {
    pub fn new(config: BufferConfig) -> Result<Self> {
        if config.capacity == 0 {
            return Err(Error::Parameter("buffer capacity must be positive".into()));
        }
        if !(config.alpha >= 0.0) || !(0.0..=1.0).contains(&config.beta) || !(config.epsilon > 0.0) {
            return Err(Error::Parameter("invalid alpha/beta/epsilon".into()));
        }
        if !(config.demo_boost >= 0.0) {
            return Err(Error::Parameter("demo boost must be non-negative".into()));
        }
        Ok(Self {
            sums: SumTree::new(config.capacity),
            maxes: MaxTree::new(config.capacity),
            slots: Vec::new(),
            fifo: VecDeque::new(),
            demo_count: 0,
            next_generation: 0,
            stale_updates: 0,
            config,
        })
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.demo_count + self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn demo_count(&self) -> usize {
        self.demo_count
    }

    /// Priority updates skipped because their entry had been evicted.
    pub fn stale_updates(&self) -> u64 {
        self.stale_updates
    }

    /// Largest stored priority, or 1 when empty.
    pub fn max_priority(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            self.maxes.max()
        }
    }

    pub fn priority(&self, slot: usize) -> Option<f64> {
        self.slot(slot).map(|s| s.priority)
    }

    pub fn get(&self, slot: usize) -> Option<&NStepSegment> {
        self.slot(slot).map(|s| &s.segment)
    }

    fn slot(&self, slot: usize) -> Option<&Slot> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    /// Slots currently holding demonstrations, ascending.
    pub fn demo_slots(&self) -> Vec<usize> {
        self.occupied()
            .filter(|&i| self.slots[i].as_ref().is_some_and(|s| s.segment.is_demo()))
            .collect()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|_| i))
    }

    /// Sampling probability of a slot.
    pub fn probability(&self, slot: usize) -> Option<f64> {
        self.slot(slot)
            .map(|_| self.sums.get(slot) / self.sums.total())
    }

    pub fn tree_total(&self) -> f64 {
        self.sums.total()
    }

    pub fn tree_leaf_sum(&self) -> f64 {
        self.sums.leaf_sum()
    }

    /// Store a segment with the current maximal priority.
    pub fn insert(&mut self, segment: NStepSegment) -> Result<usize> {
        let priority = self.max_priority();
        let slot = if self.slots.len() < self.config.capacity {
            self.slots.push(None);
            self.slots.len() - 1
        } else if let Some(old) = self.fifo.pop_front() {
            self.slots[old] = None;
            old
        } else {
            return Err(Error::BufferExhausted {
                capacity: self.config.capacity,
                demos: self.demo_count,
            });
        };
        if segment.is_demo() {
            self.demo_count += 1;
        } else {
            self.fifo.push_back(slot);
        }
        let generation = self.next_generation;
        self.next_generation += 1;
        self.slots[slot] = Some(Slot {
            segment,
            priority,
            generation,
        });
        self.write_priority(slot, priority);
        Ok(slot)
    }

    fn write_priority(&mut self, slot: usize, priority: f64) {
        self.sums.set(slot, powf(priority, self.config.alpha));
        self.maxes.set(slot, priority);
    }

    /// Stratified proportional sampling: one draw per equal-mass stratum.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampleBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        let total = self.sums.total();
        let stratum = total / batch_size as f64;
        let occupancy = self.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut segments = Vec::with_capacity(batch_size);
        let mut probabilities = Vec::with_capacity(batch_size);
        let mut is_weights = Vec::with_capacity(batch_size);
        for j in 0..batch_size {
            let u = (j as f64 + rng.random::<f64>()) * stratum;
            let slot = self.sums.find(u.min(total));
            let entry = self.slots[slot].as_ref().expect("sum tree points at an occupied slot");
            let p = self.sums.get(slot) / total;
            indices.push(SampleIndex {
                slot,
                generation: entry.generation,
            });
            segments.push(entry.segment.clone());
            probabilities.push(p);
            is_weights.push(powf(1.0 / (occupancy * p), self.config.beta));
        }
        let max_w = is_weights.iter().cloned().fold(0.0, f64::max);
        for w in &mut is_weights {
            *w /= max_w;
        }
        Ok(SampleBatch {
            indices,
            segments,
            probabilities,
            is_weights,
        })
    }

    /// `p_i = L_n + L_1 + eps + [demo] * eps_D * max_k(L_n,k + L_1,k)`.
    ///
    /// Entries evicted since sampling are skipped and counted.
    pub fn update_priorities(&mut self, indices: &[SampleIndex], loss_1step: &[f64], loss_nstep: &[f64]) -> Result<()> {
        if loss_1step.len() != indices.len() {
            return Err(Error::Shape {
                expected: indices.len(),
                actual: loss_1step.len(),
            });
        }
        if loss_nstep.len() != indices.len() {
            return Err(Error::Shape {
                expected: indices.len(),
                actual: loss_nstep.len(),
            });
        }
        let batch_max = loss_1step
            .iter()
            .zip(loss_nstep)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max);
        for (k, idx) in indices.iter().enumerate() {
            let live = self
                .slots
                .get(idx.slot)
                .and_then(Option::as_ref)
                .filter(|s| s.generation == idx.generation);
            let Some(entry) = live else {
                self.stale_updates += 1;
                continue;
            };
            let mut p = loss_nstep[k] + loss_1step[k] + self.config.epsilon;
            if entry.segment.is_demo() {
                p += self.config.demo_boost * batch_max;
                if let Some(bonus) = self.config.constant_demo_bonus {
                    p += bonus;
                }
            }
            if let Some(s) = self.slots[idx.slot].as_mut() {
                s.priority = p;
            }
            self.write_priority(idx.slot, p);
        }
        Ok(())
    }

    pub fn export_state(&self) -> BufferState {
        BufferState {
            config: self.config.clone(),
            slots: self
                .slots
                .iter()
                .map(|s| {
                    s.as_ref().map(|s| SlotState {
                        segment: s.segment.clone(),
                        priority: s.priority,
                        generation: s.generation,
                    })
                })
                .collect(),
            fifo: self.fifo.iter().copied().collect(),
            next_generation: self.next_generation,
            stale_updates: self.stale_updates,
        }
    }

    pub fn from_state(state: BufferState) -> Result<Self> {
        let mut buf = Self::new(state.config)?;
        if state.slots.len() > buf.config.capacity {
            return Err(Error::Format("more slots than capacity".into()));
        }
        for (i, s) in state.slots.into_iter().enumerate() {
            buf.slots.push(None);
            if let Some(s) = s {
                if s.segment.is_demo() {
                    buf.demo_count += 1;
                }
                buf.write_priority(i, s.priority);
                buf.slots[i] = Some(Slot {
                    segment: s.segment,
                    priority: s.priority,
                    generation: s.generation,
                });
            }
        }
        for &i in &state.fifo {
            if buf.slot(i).is_none_or(|s| s.segment.is_demo()) {
                return Err(Error::Format("eviction queue references a bad slot".into()));
            }
        }
        buf.fifo = state.fifo.into_iter().collect();
        buf.next_generation = state.next_generation;
        buf.stale_updates = state.stale_updates;
        Ok(buf)
    }
}

/// Complete buffer contents, for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferState {
    pub config: BufferConfig,
    pub slots: Vec<Option<SlotState>>,
    pub fifo: Vec<usize>,
    pub next_generation: u64,
    pub stale_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    pub segment: NStepSegment,
    pub priority: f64,
    pub generation: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experience::Transition;
    use crate::rng::seeded;
    use alloc::vec;

    fn seg(tag: f64, demo: bool) -> NStepSegment {
        NStepSegment::single(Transition {
            actor_obs: vec![tag],
            full_state: vec![tag],
            action: [0.0; 4],
            reward: 0.0,
            next_actor_obs: vec![tag],
            next_full_state: vec![tag],
            done: false,
            is_demo: demo,
        })
    }

    fn buffer(capacity: usize, alpha: f64, beta: f64) -> PrioritizedBuffer {
        PrioritizedBuffer::new(BufferConfig {
            capacity,
            alpha,
            beta,
            ..BufferConfig::default()
        })
        .unwrap()
    }

    fn set_priority(buf: &mut PrioritizedBuffer, slot: usize, p: f64) {
        let gen = buf.slots[slot].as_ref().unwrap().generation;
        buf.slots[slot].as_mut().unwrap().priority = p;
        buf.write_priority(slot, p);
        assert_eq!(buf.slots[slot].as_ref().unwrap().generation, gen);
    }

    #[test]
    fn first_insert_gets_unit_priority() {
        let mut b = buffer(8, 0.6, 0.4);
        let i = b.insert(seg(0.0, false)).unwrap();
        assert_eq!(b.priority(i), Some(1.0));
    }

    #[test]
    fn insert_takes_current_max() {
        let mut b = buffer(8, 0.6, 0.4);
        b.insert(seg(0.0, false)).unwrap();
        b.insert(seg(1.0, false)).unwrap();
        set_priority(&mut b, 0, 2.0);
        set_priority(&mut b, 1, 5.0);
        let i = b.insert(seg(2.0, false)).unwrap();
        assert_eq!(b.priority(i), Some(5.0));
    }

    #[test]
    fn demos_survive_eviction() {
        let mut b = buffer(4, 0.6, 0.4);
        b.insert(seg(0.0, true)).unwrap();
        b.insert(seg(1.0, true)).unwrap();
        b.insert(seg(2.0, false)).unwrap();
        b.insert(seg(3.0, false)).unwrap();
        for k in 4..7 {
            b.insert(seg(k as f64, false)).unwrap();
        }
        let tags: Vec<f64> = b.occupied().map(|i| b.get(i).unwrap().head.actor_obs[0]).collect();
        assert!(tags.contains(&0.0) && tags.contains(&1.0));
        assert!(!tags.contains(&2.0) && !tags.contains(&3.0) && !tags.contains(&4.0));
        assert!(tags.contains(&5.0) && tags.contains(&6.0));
        assert_eq!(b.len(), 4);
        assert_eq!(b.demo_count(), 2);
    }

    #[test]
    fn exhausted_by_demos() {
        let mut b = buffer(2, 0.6, 0.4);
        b.insert(seg(0.0, true)).unwrap();
        b.insert(seg(1.0, true)).unwrap();
        assert!(matches!(
            b.insert(seg(2.0, false)),
            Err(Error::BufferExhausted { capacity: 2, demos: 2 })
        ));
    }

    #[test]
    fn empty_sample_errors() {
        let b = buffer(4, 0.6, 0.4);
        assert_eq!(b.sample(4, &mut seeded(0, 0)).unwrap_err(), Error::EmptyBuffer);
    }

    #[test]
    fn probabilities_follow_priorities() {
        let mut b = buffer(4, 1.0, 1.0);
        b.insert(seg(0.0, false)).unwrap();
        b.insert(seg(1.0, false)).unwrap();
        set_priority(&mut b, 0, 1.0);
        set_priority(&mut b, 1, 3.0);
        assert_eq!(b.probability(0), Some(0.25));
        assert_eq!(b.probability(1), Some(0.75));
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let mut b = buffer(4, 0.0, 1.0);
        for k in 0..3 {
            b.insert(seg(k as f64, false)).unwrap();
        }
        set_priority(&mut b, 0, 100.0);
        set_priority(&mut b, 2, 1e-3);
        for i in 0..3 {
            assert!((b.probability(i).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_are_batch_normalized() {
        // priorities {1,3}, alpha=1, beta=1, N=2: raw weights {2, 2/3}, normalized {1, 1/3}
        let mut b = buffer(2, 1.0, 1.0);
        b.insert(seg(0.0, false)).unwrap();
        b.insert(seg(1.0, false)).unwrap();
        set_priority(&mut b, 0, 1.0);
        set_priority(&mut b, 1, 3.0);
        // Two strata of mass 2 each: the first always lands on slot 0 ([0,1)) or slot 1 ([1,2)).
        let mut rng = seeded(3, 0);
        let mut seen_both = false;
        for _ in 0..64 {
            let batch = b.sample(2, &mut rng).unwrap();
            let slots: Vec<usize> = batch.indices.iter().map(|i| i.slot).collect();
            if slots.contains(&0) && slots.contains(&1) {
                seen_both = true;
                for (k, &s) in slots.iter().enumerate() {
                    let expected = if s == 0 { 1.0 } else { 1.0 / 3.0 };
                    assert!((batch.is_weights[k] - expected).abs() < 1e-12);
                }
            }
            assert!(batch.is_weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        }
        assert!(seen_both);
    }

    #[test]
    fn non_demo_priority_formula() {
        let mut b = buffer(4, 0.6, 0.4);
        b.insert(seg(0.0, false)).unwrap();
        let batch = b.sample(1, &mut seeded(0, 0)).unwrap();
        b.update_priorities(&batch.indices, &[0.5], &[0.3]).unwrap();
        assert_eq!(b.priority(0), Some(0.5 + 0.3 + 1e-6));
    }

    #[test]
    fn demo_boost_uses_batch_max() {
        let mut b = buffer(4, 0.6, 0.4);
        let d = b.insert(seg(0.0, true)).unwrap();
        let n = b.insert(seg(1.0, false)).unwrap();
        let idx = [
            SampleIndex { slot: d, generation: 0 },
            SampleIndex { slot: n, generation: 1 },
        ];
        b.update_priorities(&idx, &[0.0, 4.0], &[0.0, 6.0]).unwrap();
        assert_eq!(b.priority(d), Some(0.0 + 0.0 + 1e-6 + 0.1 * 10.0));
        assert_eq!(b.priority(n), Some(6.0 + 4.0 + 1e-6));
    }

    #[test]
    fn zero_losses_hit_the_floor() {
        let mut b = buffer(8, 0.6, 0.4);
        for k in 0..5 {
            b.insert(seg(k as f64, false)).unwrap();
        }
        let batch = b.sample(5, &mut seeded(1, 0)).unwrap();
        b.update_priorities(&batch.indices, &[0.0; 5], &[0.0; 5]).unwrap();
        for i in b.occupied().collect::<Vec<_>>() {
            assert!(b.priority(i).unwrap() > 0.0);
        }
        assert!(b.sample(3, &mut seeded(2, 0)).is_ok());
    }

    #[test]
    fn stale_update_is_counted() {
        let mut b = buffer(1, 0.6, 0.4);
        b.insert(seg(0.0, false)).unwrap();
        let batch = b.sample(1, &mut seeded(0, 0)).unwrap();
        b.insert(seg(1.0, false)).unwrap();
        b.update_priorities(&batch.indices, &[1.0], &[1.0]).unwrap();
        assert_eq!(b.stale_updates(), 1);
        assert_eq!(b.priority(0), Some(1.0));
    }

    #[test]
    fn constant_bonus_only_when_configured() {
        let mut b = PrioritizedBuffer::new(BufferConfig {
            capacity: 4,
            demo_boost: 0.0,
            constant_demo_bonus: Some(0.25),
            ..BufferConfig::default()
        })
        .unwrap();
        let d = b.insert(seg(0.0, true)).unwrap();
        let idx = [SampleIndex { slot: d, generation: 0 }];
        b.update_priorities(&idx, &[1.0], &[0.0]).unwrap();
        assert_eq!(b.priority(d), Some(1.0 + 1e-6 + 0.25));
    }

    #[test]
    fn state_roundtrip() {
        let mut b = buffer(3, 0.6, 0.4);
        b.insert(seg(0.0, true)).unwrap();
        for k in 1..6 {
            b.insert(seg(k as f64, false)).unwrap();
        }
        let batch = b.sample(3, &mut seeded(5, 0)).unwrap();
        b.update_priorities(&batch.indices, &[0.1, 0.2, 0.3], &[0.0; 3]).unwrap();
        let restored = PrioritizedBuffer::from_state(b.export_state()).unwrap();
        assert_eq!(restored.export_state(), b.export_state());
        let x = b.sample(3, &mut seeded(9, 0)).unwrap();
        let y = restored.sample(3, &mut seeded(9, 0)).unwrap();
        assert_eq!(x.indices, y.indices);
        assert_eq!(x.is_weights, y.is_weights);
    }
}
