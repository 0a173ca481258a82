//! Waypoint controllers that produce demonstrations for each task.

use alloc::vec::Vec;

use super::{ClothEnv, EnvSnapshot, ResetDirective, Task};
use crate::clothsim::GripState;
use crate::experience::{Transition, ACTION_DIM};
use crate::math::{clamp, Vec3};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Descend,
    Close,
    Reopen,
    Lift,
    Carry,
    Lower,
    Open,
    Done,
}

/// Distances the controller treats as "arrived", m.
const REACHED: f64 = 0.003;
const HOVER: f64 = 0.05;
const GRASP_CLEARANCE: f64 = 0.003;

#[derive(Debug, Clone)]
pub struct ScriptedDemo {
    phase: Phase,
    retries_left: u32,
    carry_height: f64,
    place_height: Option<f64>,
    place: Vec3,
}

impl Default for ScriptedDemo {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedDemo {
    pub fn new() -> Self {
        Self {
            phase: Phase::Approach,
            retries_left: 1,
            carry_height: 0.0,
            place_height: None,
            place: Vec3::ZERO,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Node the controller aims for when grasping.
    fn grasp_node(env: &ClothEnv) -> usize {
        let cloth = &env.sim().cloth;
        let (nu, nv) = (cloth.params.nodes_u, cloth.params.nodes_v);
        match env.config().task {
            Task::DiagonalFolding => cloth.index(0, 0),
            Task::Tape => cloth.index(nu / 2, 0),
            Task::Hanging => cloth.index(nu / 2, nv - 1),
        }
    }

    /// Fix carry and place targets from the current scene, at grasp time.
    fn plan(&mut self, env: &ClothEnv) {
        let sim = env.sim();
        let grip = sim.gripper.position;
        let table = sim.rigid.table_height;
        match env.config().task {
            Task::DiagonalFolding => {
                let c = sim.corners()[2];
                self.carry_height = table + 0.04;
                self.place_height = Some(table + 0.01);
                self.place = Vec3::new(c.x, c.y, self.carry_height);
            }
            Task::Tape => {
                let y = sim.rigid.tape_y.unwrap_or(grip.y);
                // high enough that the trailing corners clear the table
                self.carry_height = table + 0.12;
                self.place_height = Some(table + 0.01);
                self.place = Vec3::new(grip.x, y, self.carry_height);
            }
            Task::Hanging => {
                let h = sim.rigid.hanger.expect("hanging task has a hanger");
                self.carry_height = h.top() + 0.05;
                self.place_height = None;
                self.place = Vec3::new(grip.x, h.center.y + 0.14, self.carry_height);
            }
        }
    }

    fn toward(env: &ClothEnv, goal: Vec3) -> (Vec3, bool) {
        let c = env.config();
        let p = env.sim().gripper.position;
        let d = goal - p;
        let mut v = d / (c.max_speed * c.control_dt);
        let m = v.x.abs().max(v.y.abs()).max(v.z.abs());
        if m > 1.0 {
            v = v / m;
        }
        (v, d.norm() <= REACHED)
    }

    pub fn act(&mut self, env: &ClothEnv) -> [f64; ACTION_DIM] {
        let sim = env.sim();
        let cfg = env.config();
        let grip = sim.gripper;
        let target = sim.cloth.positions[Self::grasp_node(env)];
        let hold = grip.state == GripState::Holding;
        let mut out = [0.0; ACTION_DIM];
        let mut set = |v: Vec3, g: f64| {
            out = [v.x, v.y, v.z, g];
        };
        loop {
            match self.phase {
                Phase::Approach => {
                    let (v, done) = Self::toward(env, target + Vec3::new(0.0, 0.0, HOVER));
                    if done {
                        self.phase = Phase::Descend;
                        continue;
                    }
                    set(v, -1.0);
                }
                Phase::Descend => {
                    let (v, done) = Self::toward(env, target + Vec3::new(0.0, 0.0, GRASP_CLEARANCE));
                    if done {
                        self.phase = Phase::Close;
                        continue;
                    }
                    set(v, -1.0);
                }
                Phase::Close => {
                    if hold {
                        self.plan(env);
                        self.phase = Phase::Lift;
                        continue;
                    }
                    if grip.aperture < cfg.grasp_threshold {
                        self.phase = Phase::Reopen;
                        continue;
                    }
                    set(Vec3::ZERO, 1.0);
                }
                Phase::Reopen => {
                    if grip.aperture > cfg.release_threshold && !hold {
                        if self.retries_left == 0 {
                            self.phase = Phase::Done;
                            continue;
                        }
                        self.retries_left -= 1;
                        self.phase = Phase::Approach;
                        continue;
                    }
                    set(Vec3::ZERO, -1.0);
                }
                Phase::Lift => {
                    if !hold {
                        self.phase = Phase::Done;
                        continue;
                    }
                    let goal = Vec3::new(grip.position.x, grip.position.y, self.carry_height);
                    let (v, done) = Self::toward(env, goal);
                    if done {
                        self.phase = Phase::Carry;
                        continue;
                    }
                    set(v, 0.0);
                }
                Phase::Carry => {
                    let (v, done) = Self::toward(env, self.place);
                    if done {
                        self.phase = if self.place_height.is_some() { Phase::Lower } else { Phase::Open };
                        continue;
                    }
                    set(v, 0.0);
                }
                Phase::Lower => {
                    let z = self.place_height.unwrap_or(self.carry_height);
                    let (v, done) = Self::toward(env, Vec3::new(self.place.x, self.place.y, z));
                    if done {
                        self.phase = Phase::Open;
                        continue;
                    }
                    set(v, 0.0);
                }
                Phase::Open => {
                    if grip.aperture > cfg.release_threshold {
                        self.phase = Phase::Done;
                        continue;
                    }
                    set(Vec3::ZERO, -1.0);
                }
                Phase::Done => set(Vec3::ZERO, 0.0),
            }
            break;
        }
        out.map(|x| clamp(x, -1.0, 1.0))
    }
}

/// One recorded episode: transitions plus the state before every step.
#[derive(Debug, Clone)]
pub struct DemoEpisode {
    pub seed: u64,
    pub transitions: Vec<Transition>,
    pub snapshots: Vec<EnvSnapshot>,
    pub success: bool,
}

/// Roll out the scripted controller from a standard reset.
pub fn run_scripted_episode(env: &mut ClothEnv, seed: u64, keep_snapshots: bool) -> Result<DemoEpisode> {
    let mut obs = env.reset(seed, &ResetDirective::Standard)?;
    let mut demo = ScriptedDemo::new();
    let mut transitions = Vec::new();
    let mut snapshots = Vec::new();
    let mut success = false;
    loop {
        if keep_snapshots {
            snapshots.push(env.snapshot());
        }
        let action = demo.act(env);
        let r = env.step(&action)?;
        transitions.push(Transition {
            actor_obs: obs.actor_obs(),
            full_state: obs.full_state,
            action,
            reward: r.reward,
            next_actor_obs: r.obs.actor_obs(),
            next_full_state: r.obs.full_state.clone(),
            done: r.info.success || r.info.unstable,
            is_demo: true,
        });
        success |= r.info.success;
        obs = r.obs;
        if r.done {
            break;
        }
    }
    Ok(DemoEpisode {
        seed,
        transitions,
        snapshots,
        success,
    })
}
