use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::render::{render, Camera, Frame, Light, Palette, Scene, TableTexture};
use super::success::{diagonal_success, hanging_condition, tape_success, HangCounter};
use super::{EnvConfig, ObsMode, PerlinField, SampledParams, Task};
use crate::approximator::NamedArray;
use crate::clothsim::{attempt_grasp, release, Anchor, ClothParams, ClothSim, ClothState, FingerAxis, GraspOutcome, GripState, Gripper, Hanger, RigidSet};
use crate::math::{clamp, tan, Vec3};
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// Index layout of the full-state vector.
pub mod full_state {
    use core::ops::Range;
    /// Four corners, xyz each, in the cloth's corner order.
    pub const CORNERS: Range<usize> = 0..12;
    pub const GRIPPER: Range<usize> = 12..15;
    pub const APERTURE: usize = 15;
    /// 1 while the gripper holds cloth.
    pub const HELD: usize = 16;
    /// Tape y, hanger y, or 0 for diagonal folding.
    pub const FEATURE: usize = 17;
    pub const DIM: usize = 18;
}

/// Low-dimensional actor input: optional gripper position (3), aperture,
/// cloth centre xy at reset, and the task feature where the task has one.
pub fn lowdim_dim(config: &EnvConfig) -> usize {
    let mut n = 1 + 2;
    if config.actor_gripper_position {
        n += 3;
    }
    if config.task.has_feature() {
        n += 1;
    }
    n
}

/// Shape of the actor observation: `lowdim` values followed by an optional
/// channel-last image of `image_size`².3 values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub lowdim: usize,
    pub image_size: Option<usize>,
}

impl ObsLayout {
    pub fn of(config: &EnvConfig) -> Self {
        Self {
            lowdim: if config.obs_mode.has_lowdim() { lowdim_dim(config) } else { 0 },
            image_size: config.obs_mode.has_image().then_some(config.image_size),
        }
    }

    pub fn image_len(&self) -> usize {
        self.image_size.map_or(0, |s| s * s * 3)
    }

    pub fn total(&self) -> usize {
        self.lowdim + self.image_len()
    }
}

/// Aux targets: corner coordinates, plus the task feature where present.
pub fn aux_indices(task: Task) -> Vec<usize> {
    let mut v: Vec<usize> = full_state::CORNERS.collect();
    if task.has_feature() {
        v.push(full_state::FEATURE);
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBundle {
    pub lowdim: Vec<f64>,
    pub image: Option<Vec<f64>>,
    pub full_state: Vec<f64>,
}

impl ObservationBundle {
    /// Low-dimensional part followed by the image, as consumed by the actor.
    pub fn actor_obs(&self) -> Vec<f64> {
        let mut v = self.lowdim.clone();
        if let Some(img) = &self.image {
            v.extend_from_slice(img);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub success: bool,
    /// Budget exhausted without success.
    pub truncated: bool,
    /// Physics diverged; the episode was aborted.
    pub unstable: bool,
    pub grasp: Option<GraspOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: ObservationBundle,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResetDirective {
    Standard,
    Snapshot(Box<EnvSnapshot>),
}

/// Complete simulator state, sufficient to resume an episode exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    pub task: Task,
    pub params: SampledParams,
    pub cloth_params: ClothParams,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub anchors: Vec<Anchor>,
    pub gripper: Gripper,
    pub rigid: RigidSet,
    pub initial_center: [f64; 2],
    pub hang_count: usize,
    pub full_state: Vec<f64>,
}

fn grip_state_id(s: GripState) -> f64 {
    match s {
        GripState::Open => 0.0,
        GripState::Closing => 1.0,
        GripState::Holding => 2.0,
    }
}

fn vecs_to_flat(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

fn flat_to_vecs(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(Vec3::from_slice).collect()
}

fn as_index(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && crate::math::is_integral(v) && v < 1e12 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("{what} is not a non-negative integer: {v}")))
    }
}

impl EnvSnapshot {
    pub const PREFIX: &'static str = "snapshot.";

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let n = self.positions.len();
        let p = &self.cloth_params;
        let g = &self.gripper;
        let r = &self.rigid;
        let (hc, hh) = r.hanger.map_or((Vec3::ZERO, Vec3::ZERO), |h| (h.center, h.half_extents));
        let arr = |name: &str, shape: Vec<usize>, data: Vec<f64>| NamedArray {
            name: format!("{}{name}", Self::PREFIX),
            shape,
            data,
        };
        let meta = alloc::vec![
            self.task.id() as f64,
            self.hang_count as f64,
            p.nodes_u as f64,
            p.nodes_v as f64,
            grip_state_id(g.state),
            if g.finger_axis == FingerAxis::X { 0.0 } else { 1.0 },
            if r.hanger.is_some() { 1.0 } else { 0.0 },
            if r.tape_y.is_some() { 1.0 } else { 0.0 },
        ];
        let anchors: Vec<f64> = self
            .anchors
            .iter()
            .flat_map(|a| [a.node as f64, a.offset.x, a.offset.y, a.offset.z])
            .collect();
        let mut gripper = Vec::with_capacity(8);
        gripper.extend(g.position.to_array());
        gripper.extend(g.velocity.to_array());
        gripper.extend([g.aperture, g.fingertip_length]);
        let mut rigid = alloc::vec![r.table_height, r.friction];
        rigid.extend(hc.to_array());
        rigid.extend(hh.to_array());
        rigid.push(r.tape_y.unwrap_or(0.0));
        alloc::vec![
            arr("meta", alloc::vec![meta.len()], meta),
            arr(
                "cloth_params",
                alloc::vec![8],
                alloc::vec![
                    p.size_u,
                    p.size_v,
                    p.node_mass,
                    p.stiffness_structural,
                    p.stiffness_shear,
                    p.stiffness_bend,
                    p.spring_damping_time,
                    p.velocity_damping
                ]
            ),
            arr("positions", alloc::vec![n, 3], vecs_to_flat(&self.positions)),
            arr("velocities", alloc::vec![n, 3], vecs_to_flat(&self.velocities)),
            arr("anchors", alloc::vec![self.anchors.len(), 4], anchors),
            arr("gripper", alloc::vec![8], gripper),
            arr("rigid", alloc::vec![9], rigid),
            arr("params", alloc::vec![SampledParams::LEN], self.params.to_vec()),
            arr("initial_center", alloc::vec![2], self.initial_center.to_vec()),
            arr("full_state", alloc::vec![self.full_state.len()], self.full_state.clone()),
        ]
    }

    pub fn from_arrays(arrays: &[NamedArray]) -> Result<Self> {
        let get = |name: &str, len: Option<usize>| -> Result<&[f64]> {
            let full = format!("{}{name}", Self::PREFIX);
            let a = arrays
                .iter()
                .find(|a| a.name == full)
                .ok_or_else(|| Error::Format(format!("snapshot is missing {full}")))?;
            if a.shape.iter().product::<usize>() != a.data.len() {
                return Err(Error::Format(format!("{full} has inconsistent shape")));
            }
            if let Some(l) = len {
                if a.data.len() != l {
                    return Err(Error::Format(format!("{full} needs {l} values, got {}", a.data.len())));
                }
            }
            Ok(&a.data)
        };
        let meta = get("meta", Some(8))?;
        let task = Task::from_id(as_index(meta[0], "task")? as u8).ok_or_else(|| Error::Format("unknown task id".into()))?;
        let cp = get("cloth_params", Some(8))?;
        let cloth_params = ClothParams {
            nodes_u: as_index(meta[2], "nodes_u")?,
            nodes_v: as_index(meta[3], "nodes_v")?,
            size_u: cp[0],
            size_v: cp[1],
            node_mass: cp[2],
            stiffness_structural: cp[3],
            stiffness_shear: cp[4],
            stiffness_bend: cp[5],
            spring_damping_time: cp[6],
            velocity_damping: cp[7],
        };
        let n = cloth_params.nodes_u.checked_mul(cloth_params.nodes_v).ok_or_else(|| Error::Format("grid too large".into()))?;
        let positions = flat_to_vecs(get("positions", Some(3 * n))?);
        let velocities = flat_to_vecs(get("velocities", Some(3 * n))?);
        let anchor_data = get("anchors", None)?;
        if anchor_data.len() % 4 != 0 {
            return Err(Error::Format("anchor rows need 4 values".into()));
        }
        let anchors = anchor_data
            .chunks_exact(4)
            .map(|a| {
                let node = as_index(a[0], "anchor node")?;
                if node >= n {
                    return Err(Error::Format(format!("anchor node {node} out of range")));
                }
                Ok(Anchor {
                    node,
                    offset: Vec3::new(a[1], a[2], a[3]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = get("gripper", Some(8))?;
        let state = match meta[4] {
            0.0 => GripState::Open,
            1.0 => GripState::Closing,
            2.0 => GripState::Holding,
            _ => return Err(Error::Format("unknown grip state".into())),
        };
        let gripper = Gripper {
            position: Vec3::from_slice(&g[0..3]),
            velocity: Vec3::from_slice(&g[3..6]),
            aperture: g[6],
            state,
            finger_axis: if meta[5] == 0.0 { FingerAxis::X } else { FingerAxis::Y },
            fingertip_length: g[7],
        };
        let r = get("rigid", Some(9))?;
        let rigid = RigidSet {
            table_height: r[0],
            friction: r[1],
            hanger: (meta[6] != 0.0).then(|| Hanger {
                center: Vec3::from_slice(&r[2..5]),
                half_extents: Vec3::from_slice(&r[5..8]),
            }),
            tape_y: (meta[7] != 0.0).then_some(r[8]),
        };
        let params = SampledParams::from_slice(get("params", Some(SampledParams::LEN))?)?;
        let c = get("initial_center", Some(2))?;
        let full = get("full_state", Some(full_state::DIM))?;
        let all_finite = positions.iter().chain(&velocities).all(|p| p.is_finite()) && full.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Format("snapshot contains non-finite values".into()));
        }
        Ok(Self {
            task,
            params,
            cloth_params,
            positions,
            velocities,
            anchors,
            gripper,
            rigid,
            initial_center: [c[0], c[1]],
            hang_count: as_index(meta[1], "hang count")?,
            full_state: full.to_vec(),
        })
    }
}

/// One of the three cloth tasks as an episodic environment.
pub struct ClothEnv {
    config: EnvConfig,
    sim: ClothSim,
    params: SampledParams,
    texture: PerlinField,
    initial_center: [f64; 2],
    grasp_rng: ChaCha8Rng,
    hang: HangCounter,
    step_index: usize,
    done: bool,
    succeeded: bool,
}

impl ClothEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            sim: placeholder_sim(&config)?,
            params: config.randomization.randomize(&mut seeded(0, stream::RESET)),
            texture: PerlinField::new(0, 4, 0.5),
            initial_center: config.layout.cloth_center,
            grasp_rng: seeded(0, stream::ENV),
            hang: HangCounter::default(),
            step_index: 0,
            done: true,
            succeeded: false,
            config,
        };
        env.reset(0, &ResetDirective::Standard)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn sim(&self) -> &ClothSim {
        &self.sim
    }

    pub fn params(&self) -> &SampledParams {
        &self.params
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn succeeded(&self) -> bool {
        self.succeeded
    }

    pub fn hang_count(&self) -> usize {
        self.hang.count
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::of(&self.config)
    }

    pub fn reset(&mut self, seed: u64, directive: &ResetDirective) -> Result<ObservationBundle> {
        self.grasp_rng = seeded(seed, stream::ENV);
        self.step_index = 0;
        self.done = false;
        self.succeeded = false;
        match directive {
            ResetDirective::Standard => {
                let params = self.config.randomization.randomize(&mut seeded(seed, stream::RESET));
                self.build(params)?;
                self.hang = HangCounter::default();
            }
            ResetDirective::Snapshot(s) => self.restore(s)?,
        }
        self.texture = PerlinField::new(self.params.texture_seed as u64, 4, 0.5);
        self.observe()
    }

    fn build(&mut self, params: SampledParams) -> Result<()> {
        let c = &self.config;
        let l = &c.layout;
        let cloth_params = ClothParams {
            size_u: l.cloth.size_u * params.cloth_scale,
            size_v: l.cloth.size_v * params.cloth_scale,
            stiffness_structural: l.cloth.stiffness_structural * params.stiffness_scale,
            stiffness_shear: l.cloth.stiffness_shear * params.stiffness_scale,
            stiffness_bend: l.cloth.stiffness_bend * params.stiffness_scale,
            spring_damping_time: l.cloth.spring_damping_time * params.damping_scale,
            ..l.cloth
        };
        let center = [l.cloth_center[0] + params.cloth_dx, l.cloth_center[1] + params.cloth_dy];
        let cloth = ClothState::flat(cloth_params, Vec3::new(center[0], center[1], c.table_height))?;
        let spawn = Vec3::from_slice(&params.gripper_offset) + l.gripper_spawn;
        let mut gripper = Gripper::new(c.workspace.clamp(spawn), l.finger_axis);
        gripper.fingertip_length = c.fingertip_length;
        let mut rigid = RigidSet::table(c.table_height, c.friction);
        if let (Task::Hanging, Some(h)) = (c.task, l.hanger_center) {
            let half = l.hanger_half_extents * params.hanger_scale;
            rigid.hanger = Some(Hanger {
                center: Vec3::new(h[0] + params.hanger_dx, h[1] + params.hanger_dy, c.table_height + half.z),
                half_extents: half,
            });
        }
        if c.task == Task::Tape {
            let y0 = center[1] - 0.5 * cloth_params.size_v;
            rigid.tape_y = Some(y0 + params.tape_fraction * cloth_params.size_v);
        }
        self.sim = ClothSim::new(cloth, gripper, rigid, c.workspace);
        self.params = params;
        self.initial_center = center;
        Ok(())
    }

    fn restore(&mut self, s: &EnvSnapshot) -> Result<()> {
        if s.task != self.config.task {
            return Err(Error::Format(format!("snapshot is for task {}, environment runs {}", s.task.name(), self.config.task.name())));
        }
        let cloth = ClothState::with_state(s.cloth_params, s.positions.clone(), s.velocities.clone(), s.anchors.clone())
            .map_err(|e| Error::Format(format!("malformed snapshot: {e}")))?;
        self.sim = ClothSim::new(cloth, s.gripper, s.rigid, self.config.workspace);
        self.params = s.params.clone();
        self.initial_center = s.initial_center;
        self.hang = HangCounter { count: s.hang_count };
        Ok(())
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            task: self.config.task,
            params: self.params.clone(),
            cloth_params: self.sim.cloth.params,
            positions: self.sim.cloth.positions.clone(),
            velocities: self.sim.cloth.velocities.clone(),
            anchors: self.sim.cloth.anchors.clone(),
            gripper: self.sim.gripper,
            rigid: self.sim.rigid,
            initial_center: self.initial_center,
            hang_count: self.hang.count,
            full_state: self.full_state(),
        }
    }

    pub fn task_feature(&self) -> f64 {
        match self.config.task {
            Task::Tape => self.sim.rigid.tape_y.unwrap_or(0.0),
            Task::Hanging => self.sim.rigid.hanger.map_or(0.0, |h| h.center.y),
            Task::DiagonalFolding => 0.0,
        }
    }

    pub fn full_state(&self) -> Vec<f64> {
        let g = &self.sim.gripper;
        let mut v = Vec::with_capacity(full_state::DIM);
        for c in self.sim.corners() {
            v.extend(c.to_array());
        }
        v.extend(g.position.to_array());
        v.push(g.aperture);
        v.push(if self.sim.cloth.anchors.is_empty() { 0.0 } else { 1.0 });
        v.push(self.task_feature());
        v
    }

    fn lowdim(&self) -> Vec<f64> {
        let g = &self.sim.gripper;
        let mut v = Vec::with_capacity(7);
        if self.config.actor_gripper_position {
            v.extend(g.position.to_array());
        }
        v.push(g.aperture);
        v.extend(self.initial_center);
        if self.config.task.has_feature() {
            v.push(self.task_feature());
        }
        v
    }

    pub fn camera(&self) -> Camera {
        let l = &self.config.layout;
        let p = &self.params;
        let size = self.config.image_size;
        let focal = (size as f64 / 2.0) / tan(l.camera_fov_deg.to_radians() / 2.0) * p.camera_focal_scale;
        Camera {
            position: l.camera_position + Vec3::from_slice(&p.camera_offset),
            target: l.camera_target + Vec3::new(p.camera_look_offset[0], p.camera_look_offset[1], 0.0),
            up: Vec3::new(0.0, 0.0, 1.0),
            focal,
            width: size,
            height: size,
        }
    }

    /// Render the current state under the episode's sampled appearance.
    pub fn render_frame(&self) -> Result<Frame> {
        self.render_with(self.camera())
    }

    pub fn render_with(&self, camera: Camera) -> Result<Frame> {
        let p = &self.params;
        let scene = Scene {
            sim: &self.sim,
            camera,
            light: Light {
                position: Vec3::from_slice(&p.light_position),
                color: p.light_color,
                ambient: 0.35,
            },
            palette: Palette {
                table: p.table_color,
                cloth: p.cloth_color,
                hanger: p.hanger_color,
                tape: [0.05, 0.05, 0.05],
                gripper: [0.15, 0.15, 0.18],
                background: p.background_color,
            },
            texture: Some(TableTexture {
                field: &self.texture,
                scale: p.texture_scale,
                amplitude: p.texture_amplitude,
            }),
            table_center: (0.45, 0.0),
            table_half: (0.45, 0.6),
        };
        render(&scene)
    }

    pub fn observe(&self) -> Result<ObservationBundle> {
        let mode = self.config.obs_mode;
        let image = if mode.has_image() { Some(self.render_frame()?.rgb) } else { None };
        Ok(ObservationBundle {
            lowdim: if mode.has_lowdim() { self.lowdim() } else { Vec::new() },
            image,
            full_state: self.full_state(),
        })
    }

    /// Success predicate on the current state. For hanging this consults the
    /// consecutive-step counter, which only [`ClothEnv::step`] advances.
    pub fn check_success(&self) -> bool {
        let c = &self.config;
        let corners = self.sim.corners();
        match c.task {
            Task::Tape => self
                .sim
                .rigid
                .tape_y
                .is_some_and(|y| tape_success(&corners, y, c.table_height, c.success_distance)),
            Task::DiagonalFolding => {
                let p = &self.sim.cloth.params;
                diagonal_success(&corners, p.size_u, p.size_v, c.success_distance, c.crumple_ratio)
            }
            Task::Hanging => self.hang.count >= c.hang_steps,
        }
    }

    pub fn step(&mut self, action: &[f64; 4]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Precondition("step called on a finished episode; reset first".into()));
        }
        let a = action.map(|x| clamp(x, -1.0, 1.0));
        let c = &self.config;
        let mut info = StepInfo::default();

        let before = self.sim.gripper.aperture;
        let after = clamp(before - a[3] * c.aperture_rate * c.control_dt, 0.0, 1.0);
        self.sim.gripper.aperture = after;
        if before >= c.grasp_threshold && after < c.grasp_threshold && self.sim.gripper.state != GripState::Holding {
            info.grasp = Some(attempt_grasp(&mut self.sim, c.grasp_radius, c.grasp_failure_prob, &mut self.grasp_rng));
        } else if before <= c.release_threshold && after > c.release_threshold {
            release(&mut self.sim);
        }
        self.sim.gripper.velocity = Vec3::new(a[0], a[1], a[2]) * c.max_speed;

        let (dt, substeps, hang_steps, hang_height) = (c.sim_dt, c.substeps, c.hang_steps, c.hang_height);
        let is_hanging = c.task == Task::Hanging;
        for _ in 0..c.physics_steps() {
            if let Err(e) = self.sim.step(dt, substeps) {
                log::warn!("episode aborted at step {}: {e}", self.step_index);
                self.done = true;
                self.step_index += 1;
                info.unstable = true;
                return Ok(StepResult {
                    obs: self.observe_lossy(),
                    reward: 0.0,
                    done: true,
                    info,
                });
            }
            if is_hanging {
                self.hang.update(hanging_condition(&self.sim, hang_height), hang_steps);
            }
            if self.check_success() {
                info.success = true;
                break;
            }
        }
        self.sim.gripper.velocity = Vec3::ZERO;
        self.step_index += 1;

        let reward = if info.success { super::SUCCESS_REWARD } else { 0.0 };
        self.succeeded = info.success;
        info.truncated = !info.success && self.step_index >= self.config.episode_steps;
        self.done = info.success || info.truncated;
        Ok(StepResult {
            obs: self.observe()?,
            reward,
            done: self.done,
            info,
        })
    }

    /// Observation after a physics failure: full state may hold non-finite
    /// values, and rendering is skipped.
    fn observe_lossy(&self) -> ObservationBundle {
        let image = self.config.obs_mode.has_image().then(|| alloc::vec![0.0; ObsLayout::of(&self.config).image_len()]);
        ObservationBundle {
            lowdim: if self.config.obs_mode.has_lowdim() { self.lowdim() } else { Vec::new() },
            image,
            full_state: self.full_state(),
        }
    }
}

fn placeholder_sim(config: &EnvConfig) -> Result<ClothSim> {
    let cloth = ClothState::flat(config.layout.cloth, Vec3::ZERO)?;
    Ok(ClothSim::new(
        cloth,
        Gripper::new(config.layout.gripper_spawn, config.layout.finger_axis),
        RigidSet::table(config.table_height, config.friction),
        config.workspace,
    ))
}

impl ObsMode {
    pub fn name(self) -> &'static str {
        match self {
            ObsMode::Lowdim => "lowdim",
            ObsMode::Image => "image",
            ObsMode::Both => "both",
        }
    }
}
