//! Point-mass reach task used as an end-to-end check of the trainer.
//!
//! A free point moves by the (clamped) action each step toward a target drawn
//! uniformly from a box. Observations use the crane layout with the lidar flag
//! and rope angle fixed at zero, so the same networks apply unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    termination_reason, Environment, Observation, RewardParams, Snapshot, StepOutcome,
    TerminationReason,
};
use crate::world::World;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointReachConfig {
    pub start: Vec3,
    pub target_min: Vec3,
    pub target_max: Vec3,
    pub action_bound: f64,
    pub reward: RewardParams,
}

impl Default for PointReachConfig {
    fn default() -> Self {
        Self {
            start: Vec3::new(0.0, 0.0, 1.0),
            target_min: Vec3::new(3.0, -2.0, 0.5),
            target_max: Vec3::new(6.0, 2.0, 2.5),
            action_bound: 0.5,
            reward: RewardParams {
                n_step_max: 100,
                ..RewardParams::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointReachEnv {
    cfg: PointReachConfig,
    world: World,
    pos: Vec3,
    target: Vec3,
    steps: u32,
    terminated: bool,
    started: bool,
}

impl PointReachEnv {
    pub fn new(cfg: PointReachConfig) -> Result<Self> {
        cfg.reward.validate()?;
        if (0..3).any(|i| cfg.target_min[i] > cfg.target_max[i]) {
            return Err(Error::Config("toy target box is inverted".into()));
        }
        Ok(Self {
            pos: cfg.start,
            target: cfg.target_min,
            cfg,
            world: World::empty(),
            steps: 0,
            terminated: true,
            started: false,
        })
    }

    fn observe(&self) -> Observation {
        Observation {
            material_pos: self.pos,
            target_pos: self.target,
            distance: (self.pos - self.target).norm(),
            collision_warning: 0.0,
            rope_angle: 0.0,
            steps: f64::from(self.steps),
        }
    }
}

impl Environment for PointReachEnv {
    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (self.cfg.target_min, self.cfg.target_max);
        self.target = Vec3::from_fn(|i, _| lo[i] + rng.random::<f64>() * (hi[i] - lo[i]));
        self.pos = self.cfg.start;
        self.steps = 0;
        self.terminated = false;
        self.started = true;
        Ok(self.observe())
    }

    fn step(&mut self, action: &Vec3) -> Result<StepOutcome> {
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        if self.terminated {
            return Err(Error::EpisodeTerminated);
        }
        let b = self.cfg.action_bound;
        self.pos += action.map(|v| v.clamp(-b, b));
        self.steps += 1;
        let distance = (self.pos - self.target).norm();
        let params = &self.cfg.reward;
        let terms = params.terms(distance, 0.0, false);
        let reason = termination_reason(params, distance, false, 0.0, false, self.steps);
        self.terminated = reason != TerminationReason::None;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: terms.total(),
            terms,
            terminated: self.terminated,
            termination_reason: reason,
        })
    }

    fn reward_params(&self) -> &RewardParams {
        &self.cfg.reward
    }

    fn action_bound(&self) -> f64 {
        self.cfg.action_bound
    }

    fn snapshot(&self) -> Option<Snapshot> {
        self.started.then_some(Snapshot {
            tip: self.pos,
            payload: self.pos,
            rope_angle: 0.0,
        })
    }

    fn world(&self) -> &World {
        &self.world
    }
}
