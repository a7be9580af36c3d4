//! Value critics: a discriminative scalar head and a generative critic that
//! writes a short token trace ending in a score.

pub mod discriminative;
pub mod generative;
pub mod reinforce;
pub mod sft;
pub mod vocab;

pub use discriminative::{disc_fit, DiscFitConfig, DiscriminativeCritic, FitReport, LabeledState, Provenance};
pub use generative::{
    build_context, critic_reward, gen_trace, parse_value, CriticContext, CriticTrace, DecodeMode, GenerativeCritic,
    IccHint, TemplateShape,
};
pub use reinforce::{reinforce_critic_loss, CriticEpisode};
pub use sft::{sft_fit, synthesize_sft_trace, SftConfig, SftExample};

use crate::env::{exact_value, MdpState, Policy, TaskSpec};
use crate::rng::Rng;

/// Anything that maps a state to a value estimate. `None` marks a parse failure.
pub trait ValueEstimator {
    fn estimate(&self, state: &MdpState, rng: &mut Rng) -> Option<f64>;
}

impl ValueEstimator for DiscriminativeCritic {
    fn estimate(&self, state: &MdpState, _rng: &mut Rng) -> Option<f64> {
        self.predict(state).ok()
    }
}

/// A generative critic read under a fixed ICC hint, actor tag and decoding mode.
pub struct GenerativeEstimator<'a> {
    pub critic: &'a GenerativeCritic,
    pub hint: f64,
    pub actor_tag: usize,
    pub mode: DecodeMode,
}

impl<'a> GenerativeEstimator<'a> {
    pub fn new(critic: &'a GenerativeCritic, hint: f64, mode: DecodeMode) -> Self {
        Self {
            critic,
            hint,
            actor_tag: critic.shape.actor_tag,
            mode,
        }
    }
}

impl ValueEstimator for GenerativeEstimator<'_> {
    fn estimate(&self, state: &MdpState, rng: &mut Rng) -> Option<f64> {
        let ctx = self.critic.context_tagged(state, self.hint, self.actor_tag).ok()?;
        gen_trace(&self.critic.model, &ctx, self.mode, self.critic.shape.max_trace_len, rng).value
    }
}

/// Exact values under a given policy.
pub struct OracleEstimator<'a, P: Policy + ?Sized> {
    pub policy: &'a P,
    pub spec: &'a TaskSpec,
}

impl<P: Policy + ?Sized> ValueEstimator for OracleEstimator<'_, P> {
    fn estimate(&self, state: &MdpState, _rng: &mut Rng) -> Option<f64> {
        exact_value(state, self.policy, self.spec).ok()
    }
}

pub struct ConstantEstimator(pub f64);

impl ValueEstimator for ConstantEstimator {
    fn estimate(&self, _state: &MdpState, _rng: &mut Rng) -> Option<f64> {
        Some(self.0)
    }
}

/// Independent uniform scores on `[0, 1)`.
pub struct RandomEstimator;

impl ValueEstimator for RandomEstimator {
    fn estimate(&self, _state: &MdpState, rng: &mut Rng) -> Option<f64> {
        use rand::Rng as _;
        Some(rng.random::<f64>())
    }
}
