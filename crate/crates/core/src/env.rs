//! Synthetic sparse-reward token-generation MDPs.
//!
//! A prompt is `m` digits drawn i.i.d. from `digit_dist`; the response is `T = m`
//! tokens over the answer vocabulary `{0..p-1}`. Only the final response token is
//! graded: the reward is 1 iff it equals the prompt digit sum modulo `p`.
//! Intermediate tokens are free, so whether they help is a credit-assignment question.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub type Token = usize;

/// Default cap on the number of continuations `exact_value` will enumerate.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    /// Answer vocabulary size `p`.
    pub modulus: usize,
    /// Number of prompt digits `m`; also the response horizon.
    pub prompt_len: usize,
    /// Categorical distribution over `{0..p-1}` used to draw prompt digits.
    pub digit_dist: Vec<f64>,
    pub seed: u64,
}

impl Default for TaskSpec {
    /// The desk-scale default: `p = 5`, `m = T = 6`, binary prompt digits.
    fn default() -> Self {
        Self {
            modulus: 5,
            prompt_len: 6,
            digit_dist: vec![0.5, 0.5, 0.0, 0.0, 0.0],
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn uniform(modulus: usize, prompt_len: usize, seed: u64) -> Self {
        Self {
            modulus,
            prompt_len,
            digit_dist: vec![1.0 / modulus as f64; modulus],
            seed,
        }
    }

    pub fn horizon(&self) -> usize {
        self.prompt_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.modulus < 2 {
            return Err(Error::InvalidSpec(format!(
                "modulus must be >= 2, got {}",
                self.modulus
            )));
        }
        if self.prompt_len < 1 {
            return Err(Error::InvalidSpec("prompt_len must be >= 1".into()));
        }
        if self.digit_dist.len() != self.modulus {
            return Err(Error::InvalidSpec(format!(
                "digit_dist has {} entries, expected {}",
                self.digit_dist.len(),
                self.modulus
            )));
        }
        if self.digit_dist.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidSpec("digit_dist entries must be finite and >= 0".into()));
        }
        let total: f64 = self.digit_dist.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("digit_dist sums to {total}, not 1")));
        }
        Ok(())
    }

    /// The correct final token for `prompt`.
    pub fn answer(&self, prompt: &[Token]) -> Token {
        prompt.iter().sum::<usize>() % self.modulus
    }

    /// The `index`-th prompt of this spec's seeded prompt sequence.
    pub fn prompt(&self, domain: u64, index: u64) -> Vec<Token> {
        let mut rng = rng::stream(self.seed, &[rng::PROMPTS, domain, index]);
        sample_prompt(self, &mut rng)
    }
}

/// A state `x ∘ y_{<t}`: the prompt plus the response generated so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MdpState {
    pub prompt: Vec<Token>,
    pub partial: Vec<Token>,
}

impl MdpState {
    pub fn new(prompt: Vec<Token>, partial: Vec<Token>) -> Self {
        Self { prompt, partial }
    }

    /// One-based step index `t = |y_{<t}| + 1`.
    pub fn step(&self) -> usize {
        self.partial.len() + 1
    }

    pub fn is_terminal(&self, spec: &TaskSpec) -> bool {
        self.partial.len() >= spec.horizon()
    }

    pub fn context(&self) -> Vec<Token> {
        let mut ctx = Vec::with_capacity(self.prompt.len() + self.partial.len());
        ctx.extend_from_slice(&self.prompt);
        ctx.extend_from_slice(&self.partial);
        ctx
    }
}

/// One sampled response with everything the actor update needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub prompt: Vec<Token>,
    pub response: Vec<Token>,
    pub reward: f64,
    /// `log π_old(y_t | s_t)` recorded at sampling time.
    pub old_logprobs: Vec<f64>,
}

impl Trajectory {
    /// State before response token `t` (zero-based).
    pub fn state_at(&self, t: usize) -> MdpState {
        MdpState::new(self.prompt.clone(), self.response[..t].to_vec())
    }
}

/// Anything that assigns next-token probabilities to a context.
pub trait Policy: Sync {
    fn vocab_size(&self) -> usize;
    fn probs(&self, context: &[Token]) -> Vec<f64>;
}

/// Hand-written policies used as controls.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    pub spec: TaskSpec,
    pub correct: bool,
}

impl Policy for ScriptedPolicy {
    fn vocab_size(&self) -> usize {
        self.spec.modulus
    }

    fn probs(&self, context: &[Token]) -> Vec<f64> {
        let p = self.spec.modulus;
        let m = self.spec.prompt_len;
        let mut out = vec![0.0; p];
        let tok = if context.len() == m + self.spec.horizon() - 1 {
            let ans = self.spec.answer(&context[..m]);
            if self.correct {
                ans
            } else {
                (ans + 1) % p
            }
        } else {
            0
        };
        out[tok] = 1.0;
        out
    }
}

pub fn sample_prompt(spec: &TaskSpec, rng: &mut Rng) -> Vec<Token> {
    (0..spec.prompt_len)
        .map(|_| rng::categorical(&spec.digit_dist, rng))
        .collect()
}

/// Binary reward: 1 iff the last response token is the prompt sum mod `p`.
pub fn grade(prompt: &[Token], response: &[Token], spec: &TaskSpec) -> Result<f64> {
    if response.len() != spec.horizon() {
        return Err(Error::LengthMismatch {
            what: "response",
            expected: spec.horizon(),
            got: response.len(),
        });
    }
    let last = response[response.len() - 1];
    Ok(if last == spec.answer(prompt) { 1.0 } else { 0.0 })
}

/// Samples the rest of the response from `state` and returns the finished tokens.
pub fn continue_from<P: Policy + ?Sized>(
    state: &MdpState,
    policy: &P,
    spec: &TaskSpec,
    rng: &mut Rng,
) -> Vec<Token> {
    let mut ctx = state.context();
    let mut response = state.partial.clone();
    while response.len() < spec.horizon() {
        let probs = policy.probs(&ctx);
        let tok = rng::categorical(&probs, rng);
        ctx.push(tok);
        response.push(tok);
    }
    response
}

/// Samples a full response for `prompt`, recording old log-probabilities.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    spec: &TaskSpec,
    prompt: &[Token],
    rng: &mut Rng,
) -> Trajectory {
    let mut ctx = prompt.to_vec();
    let mut response = Vec::with_capacity(spec.horizon());
    let mut old_logprobs = Vec::with_capacity(spec.horizon());
    for _ in 0..spec.horizon() {
        let probs = policy.probs(&ctx);
        let tok = rng::categorical(&probs, rng);
        old_logprobs.push(probs[tok].ln());
        ctx.push(tok);
        response.push(tok);
    }
    let reward = grade(prompt, &response, spec).expect("rollout produces full-length responses");
    Trajectory {
        prompt: prompt.to_vec(),
        response,
        reward,
        old_logprobs,
    }
}

fn continuation_count(vocab: usize, remaining: usize) -> u128 {
    (vocab as u128).saturating_pow(remaining as u32)
}

/// Exact success probability from `state`, plus the enumerated probability mass.
pub fn exact_value_with_mass<P: Policy + ?Sized>(
    state: &MdpState,
    policy: &P,
    spec: &TaskSpec,
    cap: u128,
) -> Result<(f64, f64)> {
    let remaining = spec.horizon().saturating_sub(state.partial.len());
    if remaining == 0 {
        return Ok((grade(&state.prompt, &state.partial, spec)?, 1.0));
    }
    let needed = continuation_count(policy.vocab_size(), remaining);
    if needed > cap {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let answer = spec.answer(&state.prompt);
    let mut ctx = state.context();
    Ok(enumerate(policy, answer, &mut ctx, remaining))
}

fn enumerate<P: Policy + ?Sized>(
    policy: &P,
    answer: Token,
    ctx: &mut Vec<Token>,
    remaining: usize,
) -> (f64, f64) {
    let probs = policy.probs(ctx);
    if remaining == 1 {
        let v = probs.get(answer).copied().unwrap_or(0.0);
        return (v, probs.iter().sum());
    }
    let (mut value, mut mass) = (0.0, 0.0);
    for (tok, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        ctx.push(tok);
        let (v, m) = enumerate(policy, answer, ctx, remaining - 1);
        ctx.pop();
        value += p * v;
        mass += p * m;
    }
    (value, mass)
}

/// Exact value by full enumeration of the continuations from `state`.
pub fn exact_value<P: Policy + ?Sized>(
    state: &MdpState,
    policy: &P,
    spec: &TaskSpec,
) -> Result<f64> {
    exact_value_with_mass(state, policy, spec, ENUMERATION_CAP).map(|(v, _)| v)
}

/// Whether `exact_value` can handle `state` under `cap`.
pub fn is_enumerable<P: Policy + ?Sized>(
    state: &MdpState,
    policy: &P,
    spec: &TaskSpec,
    cap: u128,
) -> bool {
    let remaining = spec.horizon().saturating_sub(state.partial.len());
    continuation_count(policy.vocab_size(), remaining) <= cap
}

/// Monte-Carlo value: mean terminal reward over `n_rollouts` continuations.
pub fn mc_value<P: Policy + ?Sized>(
    state: &MdpState,
    policy: &P,
    spec: &TaskSpec,
    n_rollouts: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be >= 1".into()));
    }
    let mut total = 0.0;
    for _ in 0..n_rollouts {
        let response = continue_from(state, policy, spec, rng);
        total += grade(&state.prompt, &response, spec)?;
    }
    Ok(total / n_rollouts as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeqModel;

    fn uniform_policy(p: usize) -> SeqModel {
        SeqModel::zeros(p, 4, 2, 0)
    }

    #[test]
    fn seeded_prompts_are_reproducible() {
        let spec = TaskSpec::uniform(3, 2, 11);
        let a = spec.prompt(0, 5);
        assert_eq!(a, spec.clone().prompt(0, 5));
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|&d| d < 3));
    }

    #[test]
    fn degenerate_digit_dist_gives_zeros() {
        let spec = TaskSpec {
            modulus: 2,
            prompt_len: 5,
            digit_dist: vec![1.0, 0.0],
            seed: 3,
        };
        for i in 0..20 {
            assert_eq!(spec.prompt(0, i), vec![0; 5]);
        }
    }

    #[test]
    fn prompt_tokens_in_range() {
        let spec = TaskSpec::uniform(5, 4, 1);
        for i in 0..100 {
            let x = spec.prompt(1, i);
            assert_eq!(x.len(), 4);
            assert!(x.iter().all(|&d| d < 5));
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(TaskSpec::uniform(1, 2, 0).validate().is_err());
        assert!(TaskSpec::uniform(3, 0, 0).validate().is_err());
        let mut s = TaskSpec::uniform(3, 2, 0);
        s.digit_dist = vec![0.5, 0.5, 0.5];
        assert!(s.validate().is_err());
        assert!(TaskSpec::default().validate().is_ok());
    }

    #[test]
    fn grading_examples() {
        let s3 = TaskSpec::uniform(3, 2, 0);
        assert_eq!(grade(&[1, 2], &[2, 0], &s3).unwrap(), 1.0);
        assert_eq!(grade(&[1, 2], &[0, 1], &s3).unwrap(), 0.0);
        let s5 = TaskSpec::uniform(5, 3, 0);
        assert_eq!(grade(&[4, 4, 4], &[0, 3, 2], &s5).unwrap(), 1.0);
        assert!(matches!(
            grade(&[1, 2], &[0], &s3),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn terminal_value_is_the_grade() {
        let spec = TaskSpec::uniform(3, 2, 0);
        let pol = uniform_policy(3);
        let good = MdpState::new(vec![1, 2], vec![1, 0]);
        let bad = MdpState::new(vec![1, 2], vec![1, 1]);
        assert_eq!(exact_value(&good, &pol, &spec).unwrap(), 1.0);
        assert_eq!(exact_value(&bad, &pol, &spec).unwrap(), 0.0);
    }

    #[test]
    fn uniform_policy_one_step_left() {
        let spec = TaskSpec::uniform(3, 2, 0);
        let pol = uniform_policy(3);
        let s = MdpState::new(vec![2, 2], vec![0]);
        let v = exact_value(&s, &pol, &spec).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let spec = TaskSpec::uniform(5, 6, 0);
        let pol = uniform_policy(5);
        let s = MdpState::new(vec![0; 6], vec![]);
        let err = exact_value_with_mass(&s, &pol, &spec, 100).unwrap_err();
        assert!(err.to_string().contains("mc_value"));
        assert!(!is_enumerable(&s, &pol, &spec, 100));
    }

    #[test]
    fn scripted_policies_have_extreme_values() {
        let spec = TaskSpec::uniform(5, 3, 2);
        let good = ScriptedPolicy { spec: spec.clone(), correct: true };
        let bad = ScriptedPolicy { spec: spec.clone(), correct: false };
        let mut rng = rng::stream(0, &[1]);
        for i in 0..10 {
            let s = MdpState::new(spec.prompt(0, i), vec![]);
            assert_eq!(mc_value(&s, &good, &spec, 7, &mut rng).unwrap(), 1.0);
            assert_eq!(mc_value(&s, &bad, &spec, 7, &mut rng).unwrap(), 0.0);
        }
        assert!(mc_value(&MdpState::new(vec![0; 3], vec![]), &good, &spec, 0, &mut rng).is_err());
    }

    #[test]
    fn mc_matches_one_third() {
        let spec = TaskSpec::uniform(3, 2, 0);
        let pol = uniform_policy(3);
        let s = MdpState::new(vec![1, 1], vec![2]);
        let mut rng = rng::stream(42, &[2]);
        let v = mc_value(&s, &pol, &spec, 10_000, &mut rng).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 0.015, "{v}");
    }

    #[test]
    fn rollout_records_logprobs() {
        let spec = TaskSpec::default();
        let pol = uniform_policy(5);
        let mut rng = rng::stream(0, &[3]);
        let traj = rollout(&pol, &spec, &spec.prompt(0, 0), &mut rng);
        assert_eq!(traj.response.len(), 6);
        assert_eq!(traj.old_logprobs.len(), 6);
        for lp in &traj.old_logprobs {
            assert!((lp - (0.2f64).ln()).abs() < 1e-12);
        }
        assert!(traj.reward == 0.0 || traj.reward == 1.0);
    }
}
