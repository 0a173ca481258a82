//! Mass-spring cloth with semi-implicit Euler integration, table and box
//! contact, and hard anchors that bind cloth nodes to the gripper.
//!
//! Anchored nodes are written to `gripper + offset` after every substep, so the
//! constraint holds exactly regardless of the spring and contact forces.

mod cloth;
mod grasp;

pub use cloth::{ClothParams, ClothState, Spring, SpringKind};
pub use grasp::{attempt_grasp, release, GraspOutcome};

use alloc::vec;
use serde::{Deserialize, Serialize};

use crate::math::{sqrt, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub node: usize,
    /// Node position relative to the gripper endpoint.
    pub offset: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripState {
    Open,
    Closing,
    Holding,
}

/// Direction along which the fingertips extend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerAxis {
    X,
    Y,
}

impl FingerAxis {
    pub fn unit(self) -> Vec3 {
        match self {
            FingerAxis::X => Vec3::new(1.0, 0.0, 0.0),
            FingerAxis::Y => Vec3::new(0.0, 1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            crate::math::clamp(p.x, self.min.x, self.max.x),
            crate::math::clamp(p.y, self.min.y, self.max.y),
            crate::math::clamp(p.z, self.min.z, self.max.z),
        )
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y && p.z >= self.min.z && p.z <= self.max.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    /// Fingertip midpoint.
    pub position: Vec3,
    /// Commanded velocity, m/s.
    pub velocity: Vec3,
    /// 1 = fully open, 0 = closed.
    pub aperture: f64,
    pub state: GripState,
    pub finger_axis: FingerAxis,
    /// Distance between the two fingertip extremities, m.
    pub fingertip_length: f64,
}

impl Gripper {
    pub fn new(position: Vec3, finger_axis: FingerAxis) -> Self {
        Self {
            position,
            velocity: Vec3::ZERO,
            aperture: 1.0,
            state: GripState::Open,
            finger_axis,
            fingertip_length: 0.04,
        }
    }
}

/// Axis-aligned box standing on the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hanger {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Hanger {
    pub fn top(&self) -> f64 {
        self.center.z + self.half_extents.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidSet {
    pub table_height: f64,
    pub friction: f64,
    pub hanger: Option<Hanger>,
    /// Tape mark along the x axis at this y, on the table surface. Logic and rendering only.
    pub tape_y: Option<f64>,
}

impl RigidSet {
    pub fn table(height: f64, friction: f64) -> Self {
        Self {
            table_height: height,
            friction,
            hanger: None,
            tape_y: None,
        }
    }
}

/// Cloth, gripper and static geometry advanced together.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothSim {
    pub cloth: ClothState,
    pub gripper: Gripper,
    pub rigid: RigidSet,
    pub workspace: Aabb,
    pub gravity: Vec3,
}

pub const GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.81);

impl ClothSim {
    pub fn new(cloth: ClothState, gripper: Gripper, rigid: RigidSet, workspace: Aabb) -> Self {
        Self {
            cloth,
            gripper,
            rigid,
            workspace,
            gravity: GRAVITY,
        }
    }

    /// Advance by `dt` seconds split into `substeps` equal substeps.
    pub fn step(&mut self, dt: f64, substeps: usize) -> Result<()> {
        if !(dt > 0.0) || substeps == 0 {
            return Err(Error::Parameter("dt must be positive and substeps at least 1".into()));
        }
        let h = dt / substeps as f64;
        let mut forces = vec![Vec3::ZERO; self.cloth.positions.len()];
        for _ in 0..substeps {
            self.substep(h, &mut forces)?;
        }
        Ok(())
    }

    fn substep(&mut self, h: f64, forces: &mut [Vec3]) -> Result<()> {
        let cloth = &mut self.cloth;
        let m = cloth.params.node_mass;
        let c_global = cloth.params.velocity_damping;
        for (f, v) in forces.iter_mut().zip(&cloth.velocities) {
            *f = self.gravity * m - *v * (c_global * m);
        }
        for s in &cloth.springs {
            let d = cloth.positions[s.b] - cloth.positions[s.a];
            let len = d.norm();
            if len <= 0.0 {
                continue;
            }
            let dir = d / len;
            let rel = (cloth.velocities[s.b] - cloth.velocities[s.a]).dot(dir);
            let f = dir * (s.stiffness * (len - s.rest) + s.damping * rel);
            forces[s.a] += f;
            forces[s.b] -= f;
        }
        let inv_m = 1.0 / m;
        for ((x, v), f) in cloth.positions.iter_mut().zip(cloth.velocities.iter_mut()).zip(forces.iter()) {
            *v += *f * (h * inv_m);
            *x += *v * h;
        }

        let before = self.gripper.position;
        self.gripper.position = self.workspace.clamp(before + self.gripper.velocity * h);
        let grip_vel = (self.gripper.position - before) / h;

        let mu = self.rigid.friction;
        let table = self.rigid.table_height;
        for (x, v) in cloth.positions.iter_mut().zip(cloth.velocities.iter_mut()) {
            if x.z < table {
                x.z = table;
                resolve_contact(v, Vec3::new(0.0, 0.0, 1.0), mu);
            }
            if let Some(hanger) = &self.rigid.hanger {
                if let Some((p, n)) = box_projection(hanger, *x) {
                    *x = p;
                    resolve_contact(v, n, mu);
                }
            }
        }
        for a in &cloth.anchors {
            cloth.positions[a.node] = self.gripper.position + a.offset;
            cloth.velocities[a.node] = grip_vel;
        }
        if let Some(node) = cloth
            .positions
            .iter()
            .zip(&cloth.velocities)
            .position(|(x, v)| !x.is_finite() || !v.is_finite())
        {
            return Err(Error::Unstable { node });
        }
        Ok(())
    }

    pub fn corners(&self) -> [Vec3; 4] {
        self.cloth.corners()
    }

    /// Total kinetic and spring potential energy, J.
    pub fn mechanical_energy(&self) -> f64 {
        self.cloth.kinetic_energy() + self.cloth.spring_energy()
    }
}

/// Removes the inward normal velocity and applies Coulomb-limited tangential damping.
fn resolve_contact(v: &mut Vec3, n: Vec3, mu: f64) {
    let vn = v.dot(n);
    if vn >= 0.0 {
        return;
    }
    *v -= n * vn;
    let impulse = -vn;
    let vt = v.norm();
    if vt > 0.0 {
        let scale = (vt - mu * impulse).max(0.0) / vt;
        *v *= scale;
    }
}

/// Nearest-face projection for a point strictly inside the box.
fn box_projection(b: &Hanger, p: Vec3) -> Option<(Vec3, Vec3)> {
    let d = p - b.center;
    let pen = [
        b.half_extents.x - d.x.abs(),
        b.half_extents.y - d.y.abs(),
        b.half_extents.z - d.z.abs(),
    ];
    if pen.iter().any(|&q| q <= 0.0) {
        return None;
    }
    let axis = (0..3)
        .min_by(|&i, &j| pen[i].partial_cmp(&pen[j]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap_or(2);
    let mut q = p;
    let mut n = Vec3::ZERO;
    match axis {
        0 => {
            let s = if d.x >= 0.0 { 1.0 } else { -1.0 };
            q.x = b.center.x + s * b.half_extents.x;
            n.x = s;
        }
        1 => {
            let s = if d.y >= 0.0 { 1.0 } else { -1.0 };
            q.y = b.center.y + s * b.half_extents.y;
            n.y = s;
        }
        _ => {
            let s = if d.z >= 0.0 { 1.0 } else { -1.0 };
            q.z = b.center.z + s * b.half_extents.z;
            n.z = s;
        }
    }
    Some((q, n))
}

/// Distance from `p` to the nearest node and that node's index.
pub fn nearest_node(positions: &[Vec3], p: Vec3, exclude: &[usize]) -> Option<(usize, f64)> {
    positions
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .map(|(i, x)| (i, (*x - p).norm_sq()))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal))
        .map(|(i, d2)| (i, sqrt(d2)))
}
