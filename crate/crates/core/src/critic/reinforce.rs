//! REINFORCE objective for the generative critic.

use crate::env::Token;
use crate::model::{GradientVector, SeqModel};

/// One sampled critic trace and the reward it earned.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticEpisode {
    pub context: Vec<Token>,
    pub trace: Vec<Token>,
    pub reward: f64,
}

/// `L = −(1/N) Σ_i (r_i − b) · log p(z_i | s_i)`, with `b` the batch-mean reward when
/// `baseline` is set and 0 otherwise. Returns the loss and its gradient.
pub fn reinforce_critic_loss(model: &SeqModel, episodes: &[CriticEpisode], baseline: bool) -> (f64, GradientVector) {
    let mut grad = GradientVector::zeros(model.param_count());
    if episodes.is_empty() {
        return (0.0, grad);
    }
    let n = episodes.len() as f64;
    let b = if baseline {
        episodes.iter().map(|e| e.reward).sum::<f64>() / n
    } else {
        0.0
    };
    let mut loss = 0.0;
    for ep in episodes {
        let w = ep.reward - b;
        if w == 0.0 {
            continue;
        }
        let logp = model.accumulate_sequence_grad(&ep.context, &ep.trace, -w / n, &mut grad.0);
        loss -= w * logp / n;
    }
    (loss, grad)
}
