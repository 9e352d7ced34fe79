//! Proximal policy optimization for the continuous tip-increment action.

mod buffer;
mod config;
mod gae;
mod loss;
mod train;

pub use buffer::{collect_rollouts, episode_seed, EnvSlot, EpisodeStats, RolloutBuffer, Segment, Transition};
pub use config::PpoConfig;
pub use gae::{compute_gae, AdvantageEstimate};
pub use loss::{actor_loss, clipped_surrogate, critic_loss, ActorLoss, Sample};
pub use train::{
    read_curve, train, train_with, write_curve, CurveRow, TrainOutcome, UpdateStats, CURVE_HEADER,
};
