//! Mapping between environment observations/actions and network inputs/outputs.

use serde::{Deserialize, Serialize};

use crate::env::{observation_scale, Observation, RewardParams, OBS_DIM};
use crate::{Error, Result, Vec3};

/// Coordinate frame of the network input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFrame {
    /// The ten observation components divided by their scales; actions are
    /// world-frame tip increments.
    World,
    /// Horizontal coordinates rotated so that the payload-to-target direction
    /// is the first axis; actions are expressed in the same rotated frame.
    /// Absolute horizontal position and heading are not visible to the network;
    /// payload height is.
    #[default]
    Target,
}

impl InputFrame {
    pub fn input_dim(self) -> usize {
        match self {
            InputFrame::World => OBS_DIM,
            InputFrame::Target => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputFrame::World => "world",
            InputFrame::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyIo {
    pub frame: InputFrame,
    /// Divisors for the raw observation components, in observation order.
    pub obs_scale: [f64; OBS_DIM],
    /// Meters of tip increment per unit of network output.
    pub action_scale: f64,
}

impl PolicyIo {
    pub fn new(frame: InputFrame, reward: &RewardParams, action_bound: f64) -> Self {
        Self {
            frame,
            obs_scale: observation_scale(reward),
            action_scale: action_bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || !(self.action_scale.is_finite() && self.action_scale > 0.0)
        {
            return Err(Error::Checkpoint(
                "observation and action scales must be finite and positive".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.frame.input_dim()
    }

    /// Horizontal unit vector from payload to target, `(1, 0)` when the two
    /// are vertically aligned.
    fn heading(obs: &Observation) -> (f64, f64) {
        let d = obs.target_pos - obs.material_pos;
        let h = d.x.hypot(d.y);
        if h > 1e-9 {
            (d.x / h, d.y / h)
        } else {
            (1.0, 0.0)
        }
    }

    /// Network input; entries past `input_dim()` are zero.
    pub fn encode(&self, obs: &Observation) -> [f64; OBS_DIM] {
        match self.frame {
            InputFrame::World => obs.normalized(&self.obs_scale),
            InputFrame::Target => {
                let s = &self.obs_scale;
                let d = obs.target_pos - obs.material_pos;
                let mut out = [0.0; OBS_DIM];
                out[..7].copy_from_slice(&[
                    d.x.hypot(d.y) / s[0],
                    d.z / s[2],
                    obs.material_pos.z / s[2],
                    obs.distance / s[6],
                    obs.collision_warning / s[7],
                    obs.rope_angle / s[8],
                    obs.steps / s[9],
                ]);
                out
            }
        }
    }

    /// World-frame tip increment (meters, before the env's clamp) for network
    /// output `a` taken at observation `obs`.
    pub fn decode(&self, obs: &Observation, a: &[f64]) -> Vec3 {
        let v = match self.frame {
            InputFrame::World => Vec3::new(a[0], a[1], a[2]),
            InputFrame::Target => {
                let (c, s) = Self::heading(obs);
                Vec3::new(c * a[0] - s * a[1], s * a[0] + c * a[1], a[2])
            }
        };
        v * self.action_scale
    }
}
