//! Task success predicates over corner positions.

use crate::clothsim::ClothSim;
use crate::math::{sqrt, Vec3};

/// Both corners of the lifted edge (corners 0 and 1) within `threshold` of
/// the tape line, which runs along x at height `table` and ordinate `tape_y`.
pub fn tape_success(corners: &[Vec3; 4], tape_y: f64, table: f64, threshold: f64) -> bool {
    corners[..2].iter().all(|c| {
        let dy = c.y - tape_y;
        let dz = c.z - table;
        sqrt(dy * dy + dz * dz) <= threshold
    })
}

/// One diagonal pair within `threshold`, and every same-side pair longer than
/// `ratio` times its flat length (`size_u` for edges along x, `size_v` along y).
pub fn diagonal_success(corners: &[Vec3; 4], size_u: f64, size_v: f64, threshold: f64, ratio: f64) -> bool {
    let d = |a: usize, b: usize| corners[a].distance(corners[b]);
    let folded = d(0, 2) <= threshold || d(1, 3) <= threshold;
    folded && not_crumpled(corners, size_u, size_v, ratio)
}

pub fn not_crumpled(corners: &[Vec3; 4], size_u: f64, size_v: f64, ratio: f64) -> bool {
    let d = |a: usize, b: usize| corners[a].distance(corners[b]);
    d(0, 1) > ratio * size_u && d(3, 2) > ratio * size_u && d(1, 2) > ratio * size_v && d(0, 3) > ratio * size_v
}

/// Released cloth with every corner at least `height` above the table.
pub fn hanging_condition(sim: &ClothSim, height: f64) -> bool {
    let table = sim.rigid.table_height;
    sim.cloth.anchors.is_empty() && sim.corners().iter().all(|c| c.z >= table + height)
}

/// Consecutive-step counter for the hanging condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HangCounter {
    pub count: usize,
}

impl HangCounter {
    /// Record one physics step and report whether `required` consecutive
    /// steps have now held.
    pub fn update(&mut self, holds: bool, required: usize) -> bool {
        if holds {
            self.count += 1;
        } else {
            self.count = 0;
        }
        self.count >= required
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> [Vec3; 4] {
        [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(side, 0.0, 0.0),
            Vec3::new(side, side, 0.0),
            Vec3::new(0.0, side, 0.0),
        ]
    }

    #[test]
    fn flat_cloth_is_not_folded() {
        let c = square(0.28);
        assert!(!diagonal_success(&c, 0.28, 0.28, 0.05, 0.75));
        assert!(!tape_success(&c, 0.3, 0.0, 0.05));
    }

    #[test]
    fn folded_square_succeeds() {
        let mut c = square(0.28);
        c[0] = c[2] + Vec3::new(-0.01, 0.0, 0.0);
        // the fold moved corner 0 over corner 2; sides from corner 0 are now
        // the diagonal distance to corners 1 and 3, both equal to the side
        assert!(diagonal_success(&c, 0.28, 0.28, 0.05, 0.75));
    }

    #[test]
    fn coincident_corners_with_short_side_fail() {
        let mut c = square(0.28);
        c[0] = c[2];
        c[1] = Vec3::new(0.28, 0.14, 0.0);
        assert!((c[0].distance(c[1]) - 0.5 * 0.28).abs() < 1e-12);
        assert!(!diagonal_success(&c, 0.28, 0.28, 0.05, 0.75));
    }

    #[test]
    fn tape_requires_both_corners() {
        let mut c = square(0.3);
        c[0].y = 0.52;
        assert!(!tape_success(&c, 0.5, 0.0, 0.05));
        c[1].y = 0.48;
        c[1].z = 0.01;
        assert!(tape_success(&c, 0.5, 0.0, 0.05));
    }

    #[test]
    fn hang_counter_resets() {
        let mut h = HangCounter::default();
        for _ in 0..19 {
            assert!(!h.update(true, 20));
        }
        assert!(!h.update(false, 20));
        assert_eq!(h.count, 0);
        for _ in 0..19 {
            h.update(true, 20);
        }
        assert!(h.update(true, 20));
    }
}
