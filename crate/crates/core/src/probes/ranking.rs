//! Top-1 ranking of candidate segments at a shared prefix.

use rand::Rng as _;
use serde::Serialize;

use crate::advantage::{segment, SegmentRule};
use crate::critic::ValueEstimator;
use crate::env::{self, exact_value, MdpState, Policy, TaskSpec};
use crate::error::{Error, Result};
use crate::probes::benchmark::{sample_prompt_in, PromptPool};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingRow {
    pub schema_version: u32,
    pub pool_size: usize,
    pub prompts: usize,
    pub top1_accuracy: f64,
    /// Binomial standard error of the accuracy.
    pub std_error: f64,
    /// Share of prompts whose best critic score was shared by several candidates.
    pub critic_tie_rate: f64,
    pub oracle_tie_rate: f64,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn has_tie(scores: &[f64], best: usize) -> bool {
    scores.iter().enumerate().any(|(i, &s)| i != best && s == scores[best])
}

/// One ranking problem: a shared prefix and `k` candidate next segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidates {
    pub prefix: MdpState,
    pub states: Vec<MdpState>,
}

/// Samples a prefix at a random segment boundary (never the last one) and `k`
/// independent one-segment continuations of it from the actor.
pub fn sample_candidates<P: Policy + ?Sized>(
    actor: &P,
    spec: &TaskSpec,
    rule: SegmentRule,
    k: usize,
    pool: PromptPool,
    rng: &mut rng::Rng,
) -> Result<Candidates> {
    let prompt = sample_prompt_in(spec, pool, rng)?;
    let traj = env::rollout(actor, spec, &prompt, rng);
    let seg = segment(&traj.response, rule)?;
    let starts = seg.starts();
    let j = rng.random_range(0..starts.len());
    let prefix = traj.state_at(starts[j]);
    let seg_len = seg.lengths[j];
    let states = (0..k)
        .map(|_| {
            let mut ctx = prefix.context();
            let mut partial = prefix.partial.clone();
            for _ in 0..seg_len {
                let tok = rng::categorical(&actor.probs(&ctx), rng);
                ctx.push(tok);
                partial.push(tok);
            }
            MdpState::new(prefix.prompt.clone(), partial)
        })
        .collect();
    Ok(Candidates { prefix, states })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingSpec {
    pub n_prompts: usize,
    pub rule: SegmentRule,
    pub pool: PromptPool,
    pub seed: u64,
}

/// Fraction of prompts where the critic's best candidate is the oracle's best.
/// Both sides break ties toward the lowest candidate index.
pub fn ranking_probe<P: Policy + ?Sized>(
    critic: &dyn ValueEstimator,
    actor: &P,
    spec: &TaskSpec,
    pool_sizes: &[usize],
    probe: &RankingSpec,
) -> Result<Vec<RankingRow>> {
    if probe.n_prompts == 0 {
        return Err(Error::InvalidArgument("ranking probe needs at least one prompt".into()));
    }
    let mut rows = Vec::with_capacity(pool_sizes.len());
    for &k in pool_sizes {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("pool size must be >= 2, got {k}")));
        }
        let (mut hits, mut critic_ties, mut oracle_ties) = (0usize, 0usize, 0usize);
        for i in 0..probe.n_prompts {
            let mut r = rng::stream(probe.seed, &[rng::PROBE, 1, k as u64, i as u64]);
            let cands = sample_candidates(actor, spec, probe.rule, k, probe.pool, &mut r)?;
            let oracle = cands
                .states
                .iter()
                .map(|s| exact_value(s, actor, spec))
                .collect::<Result<Vec<f64>>>()?;
            let mut cr = rng::stream(probe.seed, &[rng::PROBE, 2, k as u64, i as u64]);
            let scores: Vec<f64> = cands
                .states
                .iter()
                .map(|s| critic.estimate(s, &mut cr).unwrap_or(f64::NEG_INFINITY))
                .collect();
            let (cb, ob) = (argmax_lowest(&scores), argmax_lowest(&oracle));
            hits += (cb == ob) as usize;
            critic_ties += has_tie(&scores, cb) as usize;
            oracle_ties += has_tie(&oracle, ob) as usize;
        }
        let n = probe.n_prompts as f64;
        let acc = hits as f64 / n;
        rows.push(RankingRow {
            schema_version: crate::probes::SCHEMA_VERSION,
            pool_size: k,
            prompts: probe.n_prompts,
            top1_accuracy: acc,
            std_error: (acc * (1.0 - acc) / n).sqrt(),
            critic_tie_rate: critic_ties as f64 / n,
            oracle_tie_rate: oracle_ties as f64 / n,
        });
    }
    Ok(rows)
}
