//! Array-backed binary trees over a fixed number of leaves.
//!
//! Internal nodes are recomputed from their children on every write rather than
//! adjusted by deltas, so the root never drifts from the sum of the leaves.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut idx = self.leaves + i;
        self.nodes[idx] = value;
        while idx > 1 {
            idx /= 2;
            self.nodes[idx] = self.nodes[2 * idx] + self.nodes[2 * idx + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`. Never returns a zero-valued
    /// leaf while the tree holds positive mass.
    pub fn find(&self, mass: f64) -> usize {
        let mut u = mass;
        let mut idx = 1;
        while idx < self.leaves {
            let left = 2 * idx;
            if u < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                idx = left;
            } else {
                u -= self.nodes[left];
                idx = left + 1;
            }
        }
        let leaf = idx - self.leaves;
        if self.get(leaf) > 0.0 {
            return leaf;
        }
        // Rounding can land on an empty leaf at an interval boundary.
        (0..leaf)
            .rev()
            .chain(leaf + 1..self.leaves)
            .find(|&j| self.get(j) > 0.0)
            .unwrap_or(leaf)
    }

    pub fn leaf_sum(&self) -> f64 {
        self.nodes[self.leaves..].iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct MaxTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl MaxTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn max(&self) -> f64 {
        self.nodes[1]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut idx = self.leaves + i;
        self.nodes[idx] = value;
        while idx > 1 {
            idx /= 2;
            self.nodes[idx] = self.nodes[2 * idx].max(self.nodes[2 * idx + 1]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn find_respects_intervals() {
        let mut t = SumTree::new(4);
        t.set(0, 1.0);
        t.set(1, 0.0);
        t.set(2, 3.0);
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(3.99), 2);
        // past the end stays on a positive leaf
        assert_eq!(t.find(10.0), 2);
    }

    #[test]
    fn non_power_of_two_capacity() {
        let mut t = SumTree::new(5);
        for i in 0..5 {
            t.set(i, (i + 1) as f64);
        }
        assert_eq!(t.total(), 15.0);
        assert_eq!(t.find(14.5), 4);
    }

    #[test]
    fn max_tree_tracks_decreases() {
        let mut m = MaxTree::new(3);
        m.set(0, 2.0);
        m.set(1, 5.0);
        assert_eq!(m.max(), 5.0);
        m.set(1, 1.0);
        assert_eq!(m.max(), 2.0);
    }
}
