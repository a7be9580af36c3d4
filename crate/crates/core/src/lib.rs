//! Actor-critic laboratory for sparse-reward token MDPs: environments, small
//! autoregressive models, advantage estimators, discriminative and generative
//! critics, training loops, and critic-quality probes.

pub mod advantage;
pub mod critic;
pub mod env;
pub mod error;
pub mod model;
pub mod probes;
pub mod rng;
pub mod train;

pub use advantage::{broadcast, gae, grpo_advantages, rloo_advantages, segment, AdvantageVector, SegmentRule, Segmentation};
pub use env::{MdpState, Policy, TaskSpec, Token, Trajectory};
pub use error::{Error, Result};
pub use model::{GradientVector, Optimizer, OptimizerKind, SeqModel};
