//! Simulation, training and evaluation stack for autonomous lift-path planning
//! with a slewing, luffing, telescoping mobile crane.
//!
//! The crate is layered bottom-up:
//!
//! - [`world`]: static obstacle geometry, proximity sensing and collision queries.
//! - [`crane`]: boom kinematics and the damped spherical-pendulum payload.
//! - [`env`]: scenarios, observations, the five-term reward and episode lifecycle.
//! - [`toy`]: a point-mass reach task sharing the same observation layout.
//! - [`policy_io`]: observation encoding and action decoding at the network boundary.
//! - [`neural`]: small tanh MLPs, the diagonal Gaussian policy, Adam and checkpoints.
//! - [`ppo`]: rollout collection, GAE, clipped-surrogate and value losses, training loop.
//! - [`eval`]: deterministic batch evaluation, model comparison and curve summaries.
//! - [`config`] and [`cli`]: the run configuration document and command-line entry point.

pub mod cli;
pub mod config;
pub mod crane;
pub mod env;
pub mod error;
pub mod eval;
pub mod neural;
pub mod plot;
pub mod policy_io;
pub mod ppo;
pub mod task;
pub mod toy;
pub mod world;

/// 3D point or vector in meters (world frame, +z up).
pub type Vec3 = nalgebra::Vector3<f64>;

pub use error::{Error, Result};
