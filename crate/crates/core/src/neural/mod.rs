//! Small dense networks with hand-derived gradients.

mod adam;
mod checkpoint;
mod gaussian;
mod mlp;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gaussian::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{ForwardCache, Mlp};
