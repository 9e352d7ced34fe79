//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! | bytes            | content                                          |
//! |------------------|--------------------------------------------------|
//! | 8                | magic `CRANERL\0`                                 |
//! | 4                | format version (u32)                              |
//! | 4                | header length `H` (u32)                           |
//! | H                | UTF-8 JSON header (sizes, input frame, scales, reward params) |
//! | 8 * n_actor      | actor mean-network parameters (f64)               |
//! | 8 * act_dim      | actor `log_std` (f64)                             |
//! | 8 * n_critic     | critic parameters (f64)                           |
//!
//! Network parameters are stored layer by layer, each as the row-major
//! `n_out x n_in` weight matrix followed by the bias vector.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GaussianPolicy, Mlp};
use crate::env::{RewardParams, OBS_DIM};
use crate::policy_io::{InputFrame, PolicyIo};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CRANERL\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: GaussianPolicy,
    pub value_net: Mlp,
    /// Observation encoding and action decoding used during training.
    pub io: PolicyIo,
    pub reward: RewardParams,
    pub env_steps: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    actor_sizes: Vec<usize>,
    critic_sizes: Vec<usize>,
    act_dim: usize,
    input_frame: InputFrame,
    obs_scale: Vec<f64>,
    action_scale: f64,
    reward: RewardParams,
    env_steps: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            actor_sizes: self.policy.mean_net.sizes().to_vec(),
            critic_sizes: self.value_net.sizes().to_vec(),
            act_dim: self.policy.act_dim(),
            input_frame: self.io.frame,
            obs_scale: self.io.obs_scale.to_vec(),
            action_scale: self.io.action_scale,
            reward: self.reward.clone(),
            env_steps: self.env_steps,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let n_floats =
            self.policy.param_count() + self.value_net.params().len();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * n_floats);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let floats = self
            .policy
            .mean_net
            .params()
            .iter()
            .chain(&self.policy.log_std)
            .chain(self.value_net.params());
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

        let n_actor = Mlp::param_count(&header.actor_sizes);
        let n_critic = Mlp::param_count(&header.critic_sizes);
        let n_floats = n_actor + header.act_dim + n_critic;
        let data = &bytes[16 + hlen..];
        if data.len() != 8 * n_floats {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                8 * n_floats,
                data.len()
            )));
        }
        let floats: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let obs_scale: [f64; OBS_DIM] = header.obs_scale.as_slice().try_into().map_err(|_| {
            Error::Dimension {
                context: "checkpoint obs_scale",
                expected: OBS_DIM,
                got: header.obs_scale.len(),
            }
        })?;
        let io = PolicyIo {
            frame: header.input_frame,
            obs_scale,
            action_scale: header.action_scale,
        };
        io.validate()?;
        if header.actor_sizes.first() != Some(&io.input_dim())
            || header.critic_sizes.first() != Some(&io.input_dim())
        {
            return Err(Error::Checkpoint(format!(
                "network input width does not match the `{}` input frame ({} inputs)",
                io.frame.as_str(),
                io.input_dim()
            )));
        }
        let mean_net = Mlp::from_params(&header.actor_sizes, floats[..n_actor].to_vec())?;
        let log_std = floats[n_actor..n_actor + header.act_dim].to_vec();
        let value_net =
            Mlp::from_params(&header.critic_sizes, floats[n_actor + header.act_dim..].to_vec())?;
        Ok(Self {
            policy: GaussianPolicy::new(mean_net, log_std)?,
            value_net,
            io,
            reward: header.reward,
            env_steps: header.env_steps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::file(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reward = RewardParams::default();
        Checkpoint {
            policy: GaussianPolicy::init(&[10, 12, 3], -0.3, &mut rng).unwrap(),
            value_net: Mlp::orthogonal(&[10, 12, 1], 2f64.sqrt(), 1.0, &mut rng).unwrap(),
            io: PolicyIo::new(InputFrame::World, &reward, 0.5),
            reward,
            env_steps: 12345,
        }
    }

    #[test]
    fn bytes_round_trip_bitwise() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn layout_matches_documentation() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"CRANERL\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let first = f64::from_le_bytes(bytes[16 + hlen..24 + hlen].try_into().unwrap());
        assert_eq!(first.to_bits(), ck.policy.mean_net.params()[0].to_bits());
        let n = ck.policy.param_count() + ck.value_net.params().len();
        assert_eq!(bytes.len(), 16 + hlen + 8 * n);
    }

    #[test]
    fn corrupt_input_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&[]).is_err());
    }

    #[test]
    fn input_width_must_match_frame() {
        let mut ck = sample();
        ck.io.frame = InputFrame::Target;
        assert!(matches!(
            Checkpoint::from_bytes(&ck.to_bytes()),
            Err(Error::Checkpoint(_))
        ));
    }
}
