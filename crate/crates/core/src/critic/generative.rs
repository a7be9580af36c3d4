//! Generative critic: context template, trace decoding, parsing, and critic reward.

use std::path::Path;

use crate::critic::vocab::{self, ASK, EOT, HINT0, TAG0};
use crate::env::{MdpState, Token};
use crate::error::{Error, Result};
use crate::model::SeqModel;
use crate::rng::Rng;

/// Smoothed running success rate of the actor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IccHint {
    pub value: f64,
    pub momentum: f64,
}

impl IccHint {
    pub fn new(momentum: f64) -> Self {
        Self { value: 0.0, momentum }
    }

    /// `r̄ ← c·r̄ + (1 − c)·r`.
    pub fn update(&mut self, reward: f64) {
        self.value = self.momentum * self.value + (1.0 - self.momentum) * reward;
    }

    pub fn bucket(&self) -> usize {
        vocab::hint_bucket(self.value)
    }
}

/// Serialized critic input for one state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CriticContext {
    pub tokens: Vec<Token>,
}

/// Builds the critic template. With `icc_enabled = false` the hint and actor tag
/// are left out entirely, so the context does not depend on them.
pub fn build_context(
    state: &MdpState,
    horizon: usize,
    hint: f64,
    actor_tag: usize,
    icc_enabled: bool,
) -> Result<CriticContext> {
    let mut tokens = vocab::state_tokens(state, horizon)?;
    if icc_enabled {
        tokens.push(HINT0 + vocab::hint_bucket(hint));
        tokens.push(TAG0 + actor_tag.min(vocab::N_TAG - 1));
    }
    tokens.push(ASK);
    Ok(CriticContext { tokens })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Sample,
    Greedy,
}

/// Generated critic tokens and the value parsed from them.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticTrace {
    pub tokens: Vec<Token>,
    pub value: Option<f64>,
}

/// First score token wins: `SCORE_k` parses to `k / 10`; no score token is a failure.
pub fn parse_value(tokens: &[Token]) -> Option<f64> {
    tokens
        .iter()
        .find_map(|&t| vocab::score_index(t))
        .map(|k| k as f64 / 10.0)
}

/// `R_v = 1 − (r − v̂)²`, or 0 when parsing failed.
pub fn critic_reward(value: Option<f64>, observed: f64) -> f64 {
    match value {
        Some(v) => 1.0 - (observed - v).powi(2),
        None => 0.0,
    }
}

/// Decodes a trace after `context`, stopping at EOT or `max_len` tokens.
pub fn gen_trace(
    model: &SeqModel,
    context: &CriticContext,
    mode: DecodeMode,
    max_len: usize,
    rng: &mut Rng,
) -> CriticTrace {
    let mut seq = context.tokens.clone();
    let mut tokens = Vec::with_capacity(max_len);
    while tokens.len() < max_len {
        let tok = match mode {
            DecodeMode::Greedy => model.greedy(&seq),
            DecodeMode::Sample => model.sample(&seq, rng),
        };
        tokens.push(tok);
        seq.push(tok);
        if tok == EOT {
            break;
        }
    }
    let value = parse_value(&tokens);
    CriticTrace { tokens, value }
}

/// Shape parameters shared by every context a critic sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemplateShape {
    pub prompt_len: usize,
    pub horizon: usize,
    pub icc_enabled: bool,
    pub max_trace_len: usize,
    pub actor_tag: usize,
}

impl TemplateShape {
    /// Window that covers a full context plus a maximal trace.
    pub fn window(&self) -> usize {
        vocab::context_len(self.prompt_len, self.horizon, self.icc_enabled) + self.max_trace_len
    }
}

/// A sequence model paired with the template it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeCritic {
    pub model: SeqModel,
    pub shape: TemplateShape,
}

impl GenerativeCritic {
    pub fn new(shape: TemplateShape, embed_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let model = SeqModel::random(vocab::VOCAB, shape.window(), embed_dim, hidden, 1.0, rng);
        Self { model, shape }
    }

    /// Context for `state`, with as many response slots as prompt digits.
    pub fn context(&self, state: &MdpState, hint: f64) -> Result<CriticContext> {
        self.context_tagged(state, hint, self.shape.actor_tag)
    }

    pub fn context_tagged(&self, state: &MdpState, hint: f64, actor_tag: usize) -> Result<CriticContext> {
        build_context(state, state.prompt.len(), hint, actor_tag, self.shape.icc_enabled)
    }

    pub fn trace(&self, state: &MdpState, hint: f64, mode: DecodeMode, rng: &mut Rng) -> Result<CriticTrace> {
        let ctx = self.context(state, hint)?;
        Ok(gen_trace(&self.model, &ctx, mode, self.shape.max_trace_len, rng))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.model.save(path)
    }

    /// Loads weights and checks them against the template they will read.
    pub fn load(path: &Path, shape: TemplateShape) -> Result<Self> {
        let model = SeqModel::load(path)?;
        if model.vocab() != vocab::VOCAB || model.net.window != shape.window() {
            return Err(Error::Checkpoint(format!(
                "generative critic has vocabulary {} and window {}, expected {} and {}",
                model.vocab(),
                model.net.window,
                vocab::VOCAB,
                shape.window()
            )));
        }
        Ok(Self { model, shape })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::vocab::{reason, score};
    use crate::rng;

    #[test]
    fn parse_examples() {
        assert_eq!(parse_value(&[reason(3), reason(1), score(10), EOT]), Some(1.0));
        assert_eq!(parse_value(&[score(0)]), Some(0.0));
        assert_eq!(parse_value(&[reason(2), reason(2), EOT]), None);
        assert_eq!(parse_value(&[score(3), score(9)]), Some(0.3));
        for k in 0..=10 {
            assert_eq!(parse_value(&[reason(1), score(k), EOT]), Some(k as f64 / 10.0));
        }
    }

    #[test]
    fn critic_reward_examples() {
        assert!((critic_reward(Some(0.7), 1.0) - 0.91).abs() < 1e-12);
        assert_eq!(critic_reward(Some(0.0), 0.0), 1.0);
        assert_eq!(critic_reward(None, 1.0), 0.0);
        assert_eq!(critic_reward(None, 0.0), 0.0);
    }

    #[test]
    fn hint_updates() {
        let mut h = IccHint::new(0.9);
        h.update(1.0);
        assert!((h.value - 0.1).abs() < 1e-12);
        let mut fixed = IccHint { value: 0.4, momentum: 0.7 };
        fixed.update(0.4);
        assert!((fixed.value - 0.4).abs() < 1e-15);
        let mut slow = IccHint::new(0.99);
        for _ in 0..1000 {
            slow.update(1.0);
        }
        assert!((slow.value - 1.0).abs() < 1e-3);
        // Geometric-series closed form: 1 − c^n.
        assert!((slow.value - (1.0 - 0.99f64.powi(1000))).abs() < 1e-12);
    }

    #[test]
    fn context_wiring() {
        let s = MdpState::new(vec![1, 0], vec![3]);
        let with = build_context(&s, 2, 0.34, 5, true).unwrap();
        assert!(with.tokens.contains(&(HINT0 + 3)));
        assert!(with.tokens.contains(&(TAG0 + 5)));
        assert_eq!(with, build_context(&s, 2, 0.34, 5, true).unwrap());
        let a = build_context(&s, 2, 0.1, 5, false).unwrap();
        let b = build_context(&s, 2, 0.9, 2, false).unwrap();
        assert_eq!(a, b);
        assert!(a.tokens.iter().all(|&t| !(HINT0..TAG0 + vocab::N_TAG).contains(&t)));
    }

    fn forced(first: Token) -> SeqModel {
        let mut m = SeqModel::zeros(vocab::VOCAB, 4, 2, 0);
        let n = m.param_count();
        m.params_mut()[n - vocab::VOCAB + first] = 60.0;
        m
    }

    #[test]
    fn forced_and_failing_decodes() {
        let ctx = CriticContext { tokens: vec![vocab::SEP, ASK] };
        let mut rng = rng::stream(0, &[0]);
        let t = gen_trace(&forced(score(7)), &ctx, DecodeMode::Sample, 8, &mut rng);
        assert_eq!(t.value, Some(0.7));
        assert_eq!(t.tokens.len(), 8);
        let never = gen_trace(&forced(reason(4)), &ctx, DecodeMode::Sample, 8, &mut rng);
        assert_eq!(never.value, None);
        let eot = gen_trace(&forced(EOT), &ctx, DecodeMode::Greedy, 8, &mut rng);
        assert_eq!(eot.tokens, vec![EOT]);
        let mut r = rng::stream(0, &[1]);
        let m = SeqModel::random(vocab::VOCAB, 6, 3, 4, 1.0, &mut r);
        let g1 = gen_trace(&m, &ctx, DecodeMode::Greedy, 8, &mut r);
        let g2 = gen_trace(&m, &ctx, DecodeMode::Greedy, 8, &mut r);
        assert_eq!(g1, g2);
    }
}
