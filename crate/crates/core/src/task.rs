//! Environment factories shared by training, evaluation and the CLI.

use crate::crane::CraneConfig;
use crate::env::{CraneEnv, EnvConfig, Environment, RewardParams, Scenario};
use crate::toy::{PointReachConfig, PointReachEnv};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Crane {
        crane: CraneConfig,
        reward: RewardParams,
        env: EnvConfig,
        scenario: Scenario,
    },
    PointReach(PointReachConfig),
}

impl Task {
    pub fn crane(scenario: Scenario) -> Self {
        Task::Crane {
            crane: CraneConfig::default(),
            reward: RewardParams::default(),
            env: EnvConfig::default(),
            scenario,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            Task::Crane {
                crane,
                reward,
                env,
                scenario,
            } => Box::new(CraneEnv::new(
                crane.clone(),
                reward.clone(),
                env.clone(),
                scenario.clone(),
            )?),
            Task::PointReach(cfg) => Box::new(PointReachEnv::new(cfg.clone())?),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Task::Crane { scenario, .. } => &scenario.name,
            Task::PointReach(_) => "point-reach",
        }
    }

    pub fn reward(&self) -> &RewardParams {
        match self {
            Task::Crane { reward, .. } => reward,
            Task::PointReach(cfg) => &cfg.reward,
        }
    }

    /// Same crane, reward and env settings on a different scenario.
    pub fn with_scenario(&self, scenario: Scenario) -> Self {
        match self {
            Task::Crane {
                crane, reward, env, ..
            } => Task::Crane {
                crane: crane.clone(),
                reward: reward.clone(),
                env: env.clone(),
                scenario,
            },
            Task::PointReach(_) => Task::crane(scenario),
        }
    }
}
