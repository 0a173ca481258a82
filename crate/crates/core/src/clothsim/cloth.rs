use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Anchor;
use crate::math::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpringKind {
    Structural,
    Shear,
    Bend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub rest: f64,
    /// N/m
    pub stiffness: f64,
    /// N s/m, along the spring axis.
    pub damping: f64,
    pub kind: SpringKind,
}

/// Material and layout of a rectangular cloth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClothParams {
    /// Nodes along x.
    pub nodes_u: usize,
    /// Nodes along y.
    pub nodes_v: usize,
    /// Extent along x, m.
    pub size_u: f64,
    /// Extent along y, m.
    pub size_v: f64,
    /// kg
    pub node_mass: f64,
    pub stiffness_structural: f64,
    pub stiffness_shear: f64,
    pub stiffness_bend: f64,
    /// Spring damping as a fraction of stiffness, in seconds.
    pub spring_damping_time: f64,
    /// Mass-proportional velocity damping, 1/s.
    pub velocity_damping: f64,
}

impl Default for ClothParams {
    fn default() -> Self {
        Self {
            nodes_u: 16,
            nodes_v: 16,
            size_u: 0.28,
            size_v: 0.28,
            node_mass: 0.002,
            stiffness_structural: 400.0,
            stiffness_shear: 100.0,
            stiffness_bend: 20.0,
            spring_damping_time: 1.0e-3,
            velocity_damping: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClothState {
    pub params: ClothParams,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub springs: Vec<Spring>,
    pub anchors: Vec<Anchor>,
}

impl ClothState {
    /// Flat cloth centred at `center` in the plane `z = center.z`. Node `(i, j)`
    /// has index `j * nodes_u + i`, with `i` along x and `j` along y.
    pub fn flat(params: ClothParams, center: Vec3) -> Result<Self> {
        let (nu, nv) = (params.nodes_u, params.nodes_v);
        if nu < 2 || nv < 2 {
            return Err(Error::Parameter("cloth grid must be at least 2x2".into()));
        }
        if !(params.size_u > 0.0 && params.size_v > 0.0 && params.node_mass > 0.0) {
            return Err(Error::Parameter("cloth size and mass must be positive".into()));
        }
        let mut positions = Vec::with_capacity(nu * nv);
        for j in 0..nv {
            for i in 0..nu {
                let fx = i as f64 / (nu - 1) as f64 - 0.5;
                let fy = j as f64 / (nv - 1) as f64 - 0.5;
                positions.push(Vec3::new(
                    center.x + fx * params.size_u,
                    center.y + fy * params.size_v,
                    center.z,
                ));
            }
        }
        let springs = build_springs(&params, &positions);
        Ok(Self {
            velocities: vec![Vec3::ZERO; positions.len()],
            positions,
            springs,
            anchors: Vec::new(),
            params,
        })
    }

    /// Cloth with the springs of a flat layout and the given dynamic state.
    pub fn with_state(params: ClothParams, positions: Vec<Vec3>, velocities: Vec<Vec3>, anchors: Vec<Anchor>) -> Result<Self> {
        let mut c = Self::flat(params, Vec3::ZERO)?;
        if positions.len() != c.positions.len() || velocities.len() != c.positions.len() {
            return Err(Error::Shape {
                expected: c.positions.len(),
                actual: positions.len().min(velocities.len()),
            });
        }
        if let Some(a) = anchors.iter().find(|a| a.node >= c.positions.len()) {
            return Err(Error::Index {
                index: a.node,
                len: c.positions.len(),
            });
        }
        c.positions = positions;
        c.velocities = velocities;
        c.anchors = anchors;
        Ok(c)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.params.nodes_u + i
    }

    /// Corner node indices, counter-clockwise from `(0, 0)`:
    /// `(0,0)`, `(nu-1,0)`, `(nu-1,nv-1)`, `(0,nv-1)`.
    /// Entries 0/2 and 1/3 are diagonal pairs.
    pub fn corner_indices(&self) -> [usize; 4] {
        let (nu, nv) = (self.params.nodes_u, self.params.nodes_v);
        [
            self.index(0, 0),
            self.index(nu - 1, 0),
            self.index(nu - 1, nv - 1),
            self.index(0, nv - 1),
        ]
    }

    pub fn corners(&self) -> [Vec3; 4] {
        self.corner_indices().map(|i| self.positions[i])
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.params.node_mass * self.velocities.iter().map(|v| v.norm_sq()).sum::<f64>()
    }

    pub fn spring_energy(&self) -> f64 {
        self.springs
            .iter()
            .map(|s| {
                let ext = (self.positions[s.b] - self.positions[s.a]).norm() - s.rest;
                0.5 * s.stiffness * ext * ext
            })
            .sum()
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.positions.len() as f64;
        self.positions.iter().fold(Vec3::ZERO, |acc, p| acc + *p) / n
    }

    pub fn is_anchored(&self, node: usize) -> bool {
        self.anchors.iter().any(|a| a.node == node)
    }
}

fn build_springs(params: &ClothParams, positions: &[Vec3]) -> Vec<Spring> {
    let (nu, nv) = (params.nodes_u, params.nodes_v);
    let idx = |i: usize, j: usize| j * nu + i;
    let mut springs = Vec::new();
    let mut add = |a: usize, b: usize, k: f64, kind: SpringKind| {
        springs.push(Spring {
            a,
            b,
            rest: (positions[b] - positions[a]).norm(),
            stiffness: k,
            damping: k * params.spring_damping_time,
            kind,
        });
    };
    for j in 0..nv {
        for i in 0..nu {
            if i + 1 < nu {
                add(idx(i, j), idx(i + 1, j), params.stiffness_structural, SpringKind::Structural);
            }
            if j + 1 < nv {
                add(idx(i, j), idx(i, j + 1), params.stiffness_structural, SpringKind::Structural);
            }
            if i + 1 < nu && j + 1 < nv {
                add(idx(i, j), idx(i + 1, j + 1), params.stiffness_shear, SpringKind::Shear);
                add(idx(i + 1, j), idx(i, j + 1), params.stiffness_shear, SpringKind::Shear);
            }
            if i + 2 < nu {
                add(idx(i, j), idx(i + 2, j), params.stiffness_bend, SpringKind::Bend);
            }
            if j + 2 < nv {
                add(idx(i, j), idx(i, j + 2), params.stiffness_bend, SpringKind::Bend);
            }
        }
    }
    springs
}
