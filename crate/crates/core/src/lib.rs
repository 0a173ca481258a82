//! Cloth manipulation learning stack.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece:
//!
//! - [`experience`]: prioritized replay with pinned demonstrations and N-step segments.
//! - [`approximator`]: dense and convolutional networks, backpropagation, Adam, target copies.
//! - [`agent`]: the twin-critic learner with behavioural cloning, Q-filter and auxiliary heads.
//! - [`clothsim`]: mass-spring cloth with anchor grasping and rigid contact.
//! - [`envs`]: the Tape, Hanging and Diagonal Folding tasks, randomization, Perlin
//!   textures, a software rasterizer and scripted demonstrators.
//!
//! File formats, orchestration and the command-line tool live in the `clothrl` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how validation rejects NaN along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod agent;
pub mod approximator;
pub mod clothsim;
pub mod envs;
pub mod error;
pub mod experience;
pub mod math;
pub mod rng;

pub use error::{Error, Result};
