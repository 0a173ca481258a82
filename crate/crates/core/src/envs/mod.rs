//! Tape, Hanging and Diagonal Folding as episodic environments with sparse
//! rewards, domain randomization, optional image observations and scripted
//! demonstrations.

mod config;
mod env;
mod perlin;
mod randomization;
mod render;
mod scripted;
mod success;

pub use config::{EnvConfig, Layout, ObsMode, Task};
pub use env::{aux_indices, full_state, lowdim_dim, ClothEnv, EnvSnapshot, ObsLayout, ObservationBundle, ResetDirective, StepInfo, StepResult};
pub use perlin::PerlinField;
pub use randomization::{ColorDist, Dist, ParamDist, RandomizationSpec, SampledParams, TAPE_FRACTIONS};
pub use render::{render, surface, Camera, Frame, Light, Palette, Scene, TableTexture};
pub use scripted::{run_scripted_episode, DemoEpisode, Phase, ScriptedDemo};
pub use success::{diagonal_success, hanging_condition, not_crumpled, tape_success, HangCounter};

pub(crate) use crate::experience::SUCCESS_REWARD;
