use serde::{Deserialize, Serialize};

use super::Module;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetMode {
    /// Copy the live parameters whenever the step count is a multiple of `period`.
    Hard { period: u64 },
    /// `target <- tau * live + (1 - tau) * target` on every call.
    Polyak { tau: f64 },
}

/// A live network and its slowly tracking copy.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair<M> {
    pub live: M,
    pub target: M,
    pub mode: TargetMode,
}

impl<M: Module + Clone> TargetPair<M> {
    pub fn new(live: M, mode: TargetMode) -> Self {
        Self {
            target: live.clone(),
            live,
            mode,
        }
    }

    /// Advance the target given the learner's update count.
    pub fn sync(&mut self, step: u64) {
        match self.mode {
            TargetMode::Hard { period } => {
                if period > 0 && step.is_multiple_of(period) {
                    self.target.copy_from(&self.live);
                }
            }
            TargetMode::Polyak { tau } => {
                for (t, l) in self.target.blocks_mut().into_iter().zip(self.live.blocks()) {
                    for (ti, li) in t.iter_mut().zip(l) {
                        *ti = tau * li + (1.0 - tau) * *ti;
                    }
                }
            }
        }
    }

    pub fn hard_copy(&mut self) {
        self.target.copy_from(&self.live);
    }
}
