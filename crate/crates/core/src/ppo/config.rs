use serde::{Deserialize, Serialize};

use crate::policy_io::InputFrame;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Ratio clip range.
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Environment steps collected (across all envs) per update.
    pub steps_per_update: usize,
    pub total_steps: usize,
    /// Scale on the critic gradient before its own optimizer.
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    /// Linearly anneal the learning rate to zero over training.
    pub lr_decay: bool,
    pub n_envs: usize,
    /// Threads stepping environments during collection.
    pub workers: usize,
    pub hidden: Vec<usize>,
    /// Frame of the network input and output.
    pub input_frame: InputFrame,
    pub init_log_std: f64,
    /// Write a checkpoint every this many updates (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
    /// Fill the `wall_time_s` column; disable for byte-identical logs.
    pub record_wall_time: bool,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs_per_update: 10,
            minibatch_size: 64,
            steps_per_update: 2048,
            total_steps: 1_000_000,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            learning_rate: 1e-4,
            lr_decay: false,
            n_envs: 8,
            workers: 1,
            hidden: vec![64, 64],
            input_frame: InputFrame::default(),
            init_log_std: -1.0,
            checkpoint_every: 10,
            record_wall_time: false,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(("clip_eps", "must lie in (0, 1)".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(("gamma", "must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(("gae_lambda", "must lie in [0, 1]".into()));
        }
        if self.steps_per_update == 0 {
            return Err(("steps_per_update", "must be >= 1".into()));
        }
        if self.total_steps < self.steps_per_update {
            return Err(("total_steps", "must be >= steps_per_update".into()));
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return Err(("minibatch_size", "epochs and minibatch size must be >= 1".into()));
        }
        if self.n_envs == 0 || self.n_envs > self.steps_per_update {
            return Err(("n_envs", "must lie in [1, steps_per_update]".into()));
        }
        if self.workers == 0 {
            return Err(("workers", "must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(("learning_rate", "must be > 0".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(("max_grad_norm", "must be > 0".into()));
        }
        if self.value_coef <= 0.0 || self.entropy_coef < 0.0 {
            return Err(("value_coef", "value_coef must be > 0 and entropy_coef >= 0".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(("hidden", "need at least one non-empty hidden layer".into()));
        }
        if !self.init_log_std.is_finite() {
            return Err(("init_log_std", "must be finite".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(k, m)| Error::Config(format!("ppo.{k}: {m}")))
    }

    pub fn n_updates(&self) -> usize {
        self.total_steps / self.steps_per_update
    }
}
