use serde::{Deserialize, Serialize};

use super::RandomizationSpec;
use crate::clothsim::{Aabb, ClothParams, FingerAxis};
use crate::math::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Tape,
    Hanging,
    DiagonalFolding,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Tape, Task::Hanging, Task::DiagonalFolding];

    pub fn name(self) -> &'static str {
        match self {
            Task::Tape => "tape",
            Task::Hanging => "hanging",
            Task::DiagonalFolding => "diagonal_folding",
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Task::Tape => 0,
            Task::Hanging => 1,
            Task::DiagonalFolding => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.id() == id)
    }

    /// Whether the task exposes a scalar feature (tape or hanger y).
    pub fn has_feature(self) -> bool {
        !matches!(self, Task::DiagonalFolding)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    Lowdim,
    Image,
    Both,
}

impl ObsMode {
    pub fn has_lowdim(self) -> bool {
        !matches!(self, ObsMode::Image)
    }

    pub fn has_image(self) -> bool {
        !matches!(self, ObsMode::Lowdim)
    }
}

/// Nominal scene geometry before randomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub cloth_center: [f64; 2],
    pub cloth: ClothParams,
    pub finger_axis: FingerAxis,
    pub gripper_spawn: Vec3,
    pub hanger_center: Option<[f64; 2]>,
    pub hanger_half_extents: Vec3,
    pub camera_position: Vec3,
    pub camera_target: Vec3,
    pub camera_fov_deg: f64,
}

impl Layout {
    pub fn for_task(task: Task) -> Self {
        let base = Self {
            cloth_center: [0.4, 0.0],
            cloth: ClothParams::default(),
            finger_axis: FingerAxis::X,
            gripper_spawn: Vec3::new(0.30, -0.10, 0.08),
            hanger_center: None,
            hanger_half_extents: Vec3::new(0.12, 0.015, 0.125),
            camera_position: Vec3::new(1.0, 0.0, 0.6),
            camera_target: Vec3::new(0.4, 0.0, 0.0),
            camera_fov_deg: 60.0,
        };
        match task {
            Task::DiagonalFolding => base,
            Task::Tape => Self {
                cloth: ClothParams {
                    nodes_u: 12,
                    nodes_v: 24,
                    size_u: 0.3,
                    size_v: 0.6,
                    ..ClothParams::default()
                },
                gripper_spawn: Vec3::new(0.40, -0.24, 0.08),
                ..base
            },
            Task::Hanging => Self {
                cloth_center: [0.4, -0.2],
                gripper_spawn: Vec3::new(0.40, -0.12, 0.08),
                hanger_center: Some([0.4, 0.1]),
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub task: Task,
    /// Control steps per episode.
    pub episode_steps: usize,
    /// Seconds per control step.
    pub control_dt: f64,
    /// Seconds per physics step.
    pub sim_dt: f64,
    pub substeps: usize,
    pub workspace: Aabb,
    /// End-effector speed at |action| = 1, m/s.
    pub max_speed: f64,
    /// Aperture change per second at |action| = 1.
    pub aperture_rate: f64,
    pub grasp_threshold: f64,
    pub release_threshold: f64,
    pub grasp_radius: f64,
    pub grasp_failure_prob: f64,
    pub fingertip_length: f64,
    pub table_height: f64,
    pub friction: f64,
    /// Tape: lifted corners to tape line. Diagonal: between diagonal corners.
    pub success_distance: f64,
    /// Diagonal: minimum same-side corner distance as a fraction of the flat side.
    pub crumple_ratio: f64,
    /// Hanging: minimum corner height above the table.
    pub hang_height: f64,
    /// Hanging: consecutive physics steps the condition must hold.
    pub hang_steps: usize,
    pub obs_mode: ObsMode,
    pub image_size: usize,
    /// Include the gripper position in the actor's low-dimensional input.
    pub actor_gripper_position: bool,
    pub layout: Layout,
    pub randomization: RandomizationSpec,
}

impl EnvConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            episode_steps: 50,
            control_dt: 0.1,
            sim_dt: 1.0 / 240.0,
            substeps: 4,
            workspace: Aabb {
                min: Vec3::new(0.05, -0.45, 0.005),
                max: Vec3::new(0.80, 0.45, 0.40),
            },
            max_speed: 0.25,
            aperture_rate: 3.5,
            grasp_threshold: 0.1,
            release_threshold: 0.9,
            grasp_radius: 0.015,
            grasp_failure_prob: 0.05,
            fingertip_length: 0.04,
            table_height: 0.0,
            friction: 0.8,
            success_distance: 0.05,
            crumple_ratio: 0.75,
            hang_height: 0.05,
            hang_steps: 20,
            obs_mode: ObsMode::Lowdim,
            image_size: 84,
            actor_gripper_position: true,
            layout: Layout::for_task(task),
            randomization: RandomizationSpec::mild(),
        }
    }

    /// Physics steps per control step.
    pub fn physics_steps(&self) -> usize {
        let n = crate::math::round(self.control_dt / self.sim_dt);
        if n < 1.0 {
            1
        } else {
            n as usize
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("control_dt", self.control_dt),
            ("sim_dt", self.sim_dt),
            ("max_speed", self.max_speed),
            ("aperture_rate", self.aperture_rate),
            ("grasp_radius", self.grasp_radius),
            ("fingertip_length", self.fingertip_length),
            ("success_distance", self.success_distance),
            ("crumple_ratio", self.crumple_ratio),
            ("hang_height", self.hang_height),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(alloc::format!("{name} must be positive")));
            }
        }
        if self.episode_steps == 0 || self.substeps == 0 || self.hang_steps == 0 || self.image_size == 0 {
            return Err(Error::Parameter("step counts and image size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.grasp_failure_prob) {
            return Err(Error::Parameter("grasp_failure_prob must lie in [0, 1]".into()));
        }
        if !(0.0 < self.grasp_threshold && self.grasp_threshold < self.release_threshold && self.release_threshold < 1.0) {
            return Err(Error::Parameter("need 0 < grasp_threshold < release_threshold < 1".into()));
        }
        let w = &self.workspace;
        if !(w.min.x < w.max.x && w.min.y < w.max.y && w.min.z < w.max.z) {
            return Err(Error::Parameter("workspace box is empty".into()));
        }
        if w.min.z < self.table_height {
            return Err(Error::Parameter("workspace reaches below the table".into()));
        }
        if self.task == Task::Hanging && self.layout.hanger_center.is_none() {
            return Err(Error::Parameter("hanging task needs a hanger".into()));
        }
        self.randomization.validate()
    }
}
