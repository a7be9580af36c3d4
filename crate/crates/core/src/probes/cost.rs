//! Analytic FLOP model for one training step and a tally of measured runs.
//!
//! Per model with `P` parameters processing `T` tokens: generation `2PT`, forward
//! `2PT`, training `6PT`. The actor always pays all three (`10 P_a T`). A critic
//! that only scores and trains pays `8 P_c T_c`, where `T_c` is the number of
//! critic tokens: `T` for a scalar critic, `T + (T/L1)·L2` for a generative critic
//! that writes `L2` tokens per segment of length `L1`. Branched-rollout estimation
//! replaces the critic with `n` actor continuations of length `L2'` per segment,
//! `T_r = (T/L1)·L2'·n` generated tokens costing `2 P_a T_r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub actor_params: f64,
    pub critic_params: f64,
    /// Actor tokens per step.
    pub tokens: f64,
    /// Mean segment length `L1`.
    pub segment_len: f64,
    /// Mean critic generation length per segment `L2`.
    pub critic_gen_len: f64,
    /// Mean branched-rollout length `L2'`.
    pub rollout_len: f64,
    /// Branches per prefix `n`.
    pub branches: f64,
}

impl CostParams {
    /// Segments of 120 tokens, critic traces of 300 tokens, 4 branches of 1024 tokens.
    pub fn reference(params: f64, tokens: f64) -> Self {
        Self {
            actor_params: params,
            critic_params: params,
            tokens,
            segment_len: 120.0,
            critic_gen_len: 300.0,
            rollout_len: 1024.0,
            branches: 4.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("actor_params", self.actor_params),
            ("critic_params", self.critic_params),
            ("tokens", self.tokens),
            ("segment_len", self.segment_len),
            ("critic_gen_len", self.critic_gen_len),
            ("rollout_len", self.rollout_len),
            ("branches", self.branches),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("cost parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMethod {
    Ppo,
    Genac,
    VinePpo,
}

impl CostMethod {
    pub const ALL: [CostMethod; 3] = [CostMethod::Ppo, CostMethod::Genac, CostMethod::VinePpo];

    pub fn name(self) -> &'static str {
        match self {
            CostMethod::Ppo => "PPO",
            CostMethod::Genac => "GenAC",
            CostMethod::VinePpo => "VinePPO",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub method: CostMethod,
    pub flops: f64,
    /// `flops / (P_a · T)`.
    pub per_pt: f64,
    pub ratio_vs_ppo: f64,
    /// Ratio rounded to one decimal.
    pub ratio_rounded: f64,
}

fn raw_flops(p: &CostParams, method: CostMethod) -> f64 {
    let actor = 10.0 * p.actor_params * p.tokens;
    match method {
        CostMethod::Ppo => actor + 8.0 * p.critic_params * p.tokens,
        CostMethod::Genac => {
            let t_c = p.tokens + p.tokens / p.segment_len * p.critic_gen_len;
            actor + 8.0 * p.critic_params * t_c
        }
        CostMethod::VinePpo => {
            let t_r = p.tokens / p.segment_len * p.rollout_len * p.branches;
            actor + 2.0 * p.actor_params * t_r
        }
    }
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn cost_model(params: &CostParams, method: CostMethod) -> Result<CostEstimate> {
    params.validate()?;
    let flops = raw_flops(params, method);
    let ratio = flops / raw_flops(params, CostMethod::Ppo);
    Ok(CostEstimate {
        method,
        flops,
        per_pt: flops / (params.actor_params * params.tokens),
        ratio_vs_ppo: ratio,
        ratio_rounded: round1(ratio),
    })
}

/// How a training run spends compute, for tallying observed token counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticAccounting {
    /// No critic model.
    None,
    /// Scalar critic scoring every actor token.
    Scalar,
    /// Generative critic: actor tokens plus generated trace tokens.
    Generative,
}

/// FLOPs for one step with the observed token counts.
pub fn step_flops(
    accounting: CriticAccounting,
    actor_params: usize,
    critic_params: usize,
    actor_tokens: u64,
    critic_gen_tokens: u64,
) -> f64 {
    let (pa, pc, t) = (actor_params as f64, critic_params as f64, actor_tokens as f64);
    let actor = 10.0 * pa * t;
    match accounting {
        CriticAccounting::None => actor,
        CriticAccounting::Scalar => actor + 8.0 * pc * t,
        CriticAccounting::Generative => actor + 8.0 * pc * (t + critic_gen_tokens as f64),
    }
}

/// Sum of [`step_flops`] over per-step `(actor_tokens, critic_gen_tokens)` counts.
pub fn measured_flops(
    accounting: CriticAccounting,
    actor_params: usize,
    critic_params: usize,
    steps: impl IntoIterator<Item = (u64, u64)>,
) -> f64 {
    steps
        .into_iter()
        .map(|(t, g)| step_flops(accounting, actor_params, critic_params, t, g))
        .sum()
}
