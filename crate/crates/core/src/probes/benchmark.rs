//! State-value benchmarks drawn from frozen-actor rollouts.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::advantage::{segment, SegmentRule};
use crate::critic::{LabeledState, Provenance};
use crate::env::{self, exact_value, is_enumerable, mc_value, MdpState, Policy, TaskSpec, Token, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::rng;

/// Sub-streams for disjoint benchmark splits.
pub mod split {
    pub const TRAIN: u64 = 0;
    pub const VAL: u64 = 1;
    pub const TEST: u64 = 2;
    pub const SFT: u64 = 3;
    pub const SFT_HELD_OUT: u64 = 4;
    pub const RL: u64 = 5;
}

/// Which prompts a benchmark may draw. Held-out prompts are a fixed pseudo-random
/// quarter of all prompts, so critics can be validated on prompts they never trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPool {
    #[default]
    All,
    Train,
    HeldOut,
}

pub fn is_held_out(prompt: &[Token]) -> bool {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &d in prompt {
        h = (h ^ (d as u64 + 1)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h ^= h >> 29;
    h.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 62 == 0
}

impl PromptPool {
    pub fn admits(self, prompt: &[Token]) -> bool {
        match self {
            PromptPool::All => true,
            PromptPool::Train => !is_held_out(prompt),
            PromptPool::HeldOut => is_held_out(prompt),
        }
    }
}

/// Draws prompts until one falls in `pool`.
pub fn sample_prompt_in(spec: &TaskSpec, pool: PromptPool, rng: &mut rng::Rng) -> Result<Vec<Token>> {
    for _ in 0..10_000 {
        let p = env::sample_prompt(spec, rng);
        if pool.admits(&p) {
            return Ok(p);
        }
    }
    Err(Error::InvalidArgument(format!("no prompt found in pool {pool:?}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Labeler {
    Exact,
    Mc { rollouts: usize },
    /// Exact when the state is enumerable, otherwise Monte Carlo.
    Auto { rollouts: usize },
}

impl Default for Labeler {
    fn default() -> Self {
        Labeler::Auto { rollouts: 4096 }
    }
}

/// Value label for one state.
pub fn label_state<P: Policy + ?Sized>(
    state: &MdpState,
    policy: &P,
    spec: &TaskSpec,
    labeler: Labeler,
    rng: &mut rng::Rng,
) -> Result<(f64, Provenance)> {
    match labeler {
        Labeler::Exact => Ok((exact_value(state, policy, spec)?, Provenance::Exact)),
        Labeler::Mc { rollouts } => Ok((mc_value(state, policy, spec, rollouts, rng)?, Provenance::Mc(rollouts))),
        Labeler::Auto { rollouts } => {
            if is_enumerable(state, policy, spec, ENUMERATION_CAP) {
                Ok((exact_value(state, policy, spec)?, Provenance::Exact))
            } else {
                Ok((mc_value(state, policy, spec, rollouts, rng)?, Provenance::Mc(rollouts)))
            }
        }
    }
}

/// Boundary cut points of a response: segment starts, plus the end when
/// `include_terminal` is set.
pub fn boundaries(response: &[Token], rule: SegmentRule, include_terminal: bool) -> Result<Vec<usize>> {
    let mut cuts = segment(response, rule)?.starts();
    if include_terminal {
        cuts.push(response.len());
    }
    Ok(cuts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub n_states: usize,
    pub rule: SegmentRule,
    pub labeler: Labeler,
    pub include_terminal: bool,
    pub pool: PromptPool,
    pub seed: u64,
    /// Disjoint stream selector, see [`split`].
    pub split: u64,
}

/// One state per frozen-actor rollout, cut at a uniformly chosen segment boundary
/// and labeled with its value under that actor.
pub fn build_value_benchmark<P: Policy + ?Sized>(
    actor: &P,
    spec: &TaskSpec,
    bench: &BenchmarkSpec,
) -> Result<Vec<LabeledState>> {
    spec.validate()?;
    if actor.vocab_size() != spec.modulus {
        return Err(Error::InvalidArgument(format!(
            "actor vocabulary {} does not match modulus {}",
            actor.vocab_size(),
            spec.modulus
        )));
    }
    (0..bench.n_states)
        .map(|i| {
            let mut r = rng::stream(bench.seed, &[rng::BENCH, bench.split, i as u64]);
            let prompt = sample_prompt_in(spec, bench.pool, &mut r)?;
            let traj = env::rollout(actor, spec, &prompt, &mut r);
            let cuts = boundaries(&traj.response, bench.rule, bench.include_terminal)?;
            let cut = cuts[r.random_range(0..cuts.len())];
            let state = traj.state_at(cut);
            let (value, provenance) = label_state(&state, actor, spec, bench.labeler, &mut r)?;
            Ok(LabeledState::new(state, value, provenance))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeqModel;

    fn bench(n: usize, labeler: Labeler, terminal: bool) -> BenchmarkSpec {
        BenchmarkSpec {
            n_states: n,
            rule: SegmentRule::Fixed { len: 2 },
            labeler,
            include_terminal: terminal,
            pool: PromptPool::All,
            seed: 4,
            split: split::TRAIN,
        }
    }

    #[test]
    fn exact_labels_match_oracle() {
        let spec = TaskSpec::uniform(3, 4, 0);
        let mut r = rng::stream(1, &[0]);
        let actor = SeqModel::random(3, 7, 3, 4, 2.0, &mut r);
        let data = build_value_benchmark(&actor, &spec, &bench(30, Labeler::Exact, true)).unwrap();
        for ex in &data {
            assert_eq!(ex.value, exact_value(&ex.state, &actor, &spec).unwrap());
            assert_eq!(ex.state.partial.len() % 2, 0);
            if ex.state.partial.len() == 4 {
                assert!(ex.value == 0.0 || ex.value == 1.0);
            }
        }
        assert!(data.iter().any(|ex| ex.state.partial.len() == 4));
        let again = build_value_benchmark(&actor, &spec, &bench(30, Labeler::Exact, true)).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn no_terminal_states_by_request() {
        let spec = TaskSpec::default();
        let mut r = rng::stream(2, &[0]);
        let actor = SeqModel::random(5, 11, 3, 4, 1.0, &mut r);
        let data = build_value_benchmark(&actor, &spec, &bench(40, Labeler::default(), false)).unwrap();
        assert!(data.iter().all(|ex| ex.state.partial.len() < 6 && ex.provenance == Provenance::Exact));
        assert!(build_value_benchmark(&SeqModel::zeros(3, 4, 2, 0), &spec, &bench(1, Labeler::Exact, false)).is_err());
    }

    #[test]
    fn prompt_pools_are_disjoint() {
        let spec = TaskSpec::default();
        let mut r = rng::stream(3, &[0]);
        let held: Vec<Vec<Token>> = (0..200).map(|_| sample_prompt_in(&spec, PromptPool::HeldOut, &mut r).unwrap()).collect();
        let train: Vec<Vec<Token>> = (0..200).map(|_| sample_prompt_in(&spec, PromptPool::Train, &mut r).unwrap()).collect();
        assert!(held.iter().all(|p| !train.contains(p)));
        // Roughly a quarter of the 64 binary prompts are held out.
        let all: Vec<Vec<Token>> = (0..64u32).map(|b| (0..6).map(|i| ((b >> i) & 1) as usize).collect()).collect();
        let n_held = all.iter().filter(|p| is_held_out(p)).count();
        assert!((8..=24).contains(&n_held), "{n_held}");
    }
}
