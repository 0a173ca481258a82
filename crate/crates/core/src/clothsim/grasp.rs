use alloc::vec::Vec;

use rand::Rng;

use super::{nearest_node, Anchor, ClothSim, GripState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraspOutcome {
    /// No node within reach of the fingertip.
    Miss,
    /// Contact was made but the grasp was failed on purpose.
    InjectedFailure,
    Grasped,
}

/// Try to bind cloth nodes to the closing gripper.
///
/// Requires a node within `radius` of the fingertip midpoint; then fails with
/// probability `failure_prob`; otherwise anchors the nodes nearest to the
/// fingertip midpoint and its two extremities (three distinct nodes), keeping
/// their current offsets from the gripper. Any previous anchors are replaced.
pub fn attempt_grasp<R: Rng + ?Sized>(sim: &mut ClothSim, radius: f64, failure_prob: f64, rng: &mut R) -> GraspOutcome {
    sim.cloth.anchors.clear();
    let grip = sim.gripper.position;
    let Some((_, dist)) = nearest_node(&sim.cloth.positions, grip, &[]) else {
        return GraspOutcome::Miss;
    };
    if dist > radius {
        sim.gripper.state = GripState::Closing;
        return GraspOutcome::Miss;
    }
    if rng.random::<f64>() < failure_prob {
        sim.gripper.state = GripState::Closing;
        return GraspOutcome::InjectedFailure;
    }
    let half = sim.gripper.finger_axis.unit() * (0.5 * sim.gripper.fingertip_length);
    let mut chosen: Vec<usize> = Vec::with_capacity(3);
    for p in [grip, grip - half, grip + half] {
        if let Some((node, _)) = nearest_node(&sim.cloth.positions, p, &chosen) {
            chosen.push(node);
        }
    }
    sim.cloth.anchors = chosen
        .into_iter()
        .map(|node| Anchor {
            node,
            offset: sim.cloth.positions[node] - grip,
        })
        .collect();
    sim.gripper.state = GripState::Holding;
    GraspOutcome::Grasped
}

/// Drop all anchors; the nodes keep their state and rejoin free dynamics.
pub fn release(sim: &mut ClothSim) {
    sim.cloth.anchors.clear();
    sim.gripper.state = GripState::Open;
}
