//! Critic fitting and scoring shared by the probes.

use serde::{Deserialize, Serialize};

use crate::advantage::SegmentRule;
use crate::critic::{DecodeMode, DiscriminativeCritic, GenerativeCritic, GenerativeEstimator, LabeledState, ValueEstimator};
use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::model::{OptimizerKind, SeqModel};
use crate::probes::benchmark::{build_value_benchmark, split, BenchmarkSpec, Labeler, PromptPool};
use crate::rng;
use crate::train::{
    actor_success_rate, build_actor, pretrain_disc_critic, pretrain_gen_critic, run_grpo, run_sft, ActorConfig,
    DiscConfig, GenConfig, NoopObserver, PpoConfig, PARSE_FAILURE_VALUE,
};

/// Critic network size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacity {
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Capacity {
    pub const fn new(embed_dim: usize, hidden: usize) -> Self {
        Self { embed_dim, hidden }
    }

    pub fn label(&self) -> String {
        format!("d{}h{}", self.embed_dim, self.hidden)
    }
}

/// Small, medium and large toy critics.
pub const DEFAULT_CAPACITIES: [Capacity; 3] = [Capacity::new(4, 8), Capacity::new(8, 16), Capacity::new(16, 32)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticFamily {
    Disc,
    Gen,
}

impl CriticFamily {
    pub fn name(self) -> &'static str {
        match self {
            CriticFamily::Disc => "disc",
            CriticFamily::Gen => "gen",
        }
    }
}

/// Generative training pipeline stages, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenStage {
    Base,
    Sft,
    Rl,
}

impl GenStage {
    pub const ALL: [GenStage; 3] = [GenStage::Base, GenStage::Sft, GenStage::Rl];

    pub fn name(self) -> &'static str {
        match self {
            GenStage::Base => "base",
            GenStage::Sft => "sft",
            GenStage::Rl => "rl",
        }
    }
}

/// How probe critics are trained and scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeTraining {
    pub disc: DiscConfig,
    pub gen: GenConfig,
    /// The scalar critic is fit once per rate and the best validation fit is kept.
    pub disc_lrs: Vec<f64>,
    pub optimizer: OptimizerKind,
    /// Held-out test states per benchmark.
    pub test_states: usize,
    pub workers: usize,
}

impl Default for ProbeTraining {
    fn default() -> Self {
        Self {
            disc: DiscConfig::default(),
            gen: GenConfig::default(),
            disc_lrs: vec![3e-3, 1e-2, 3e-2],
            optimizer: OptimizerKind::adam(),
            test_states: 256,
            workers: 1,
        }
    }
}

impl ProbeTraining {
    pub fn validate(&self) -> Result<()> {
        if self.disc_lrs.is_empty() || self.disc_lrs.iter().any(|&lr| !(lr > 0.0)) {
            return Err(Error::InvalidArgument("disc_lrs must be non-empty and positive".into()));
        }
        if self.test_states == 0 {
            return Err(Error::InvalidArgument("test_states must be positive".into()));
        }
        Ok(())
    }
}

/// The policy whose values the probes ask about: a fresh actor, optionally
/// warm-started with a few GRPO iterations so that values vary across states.
pub fn frozen_actor(spec: &TaskSpec, cfg: &ActorConfig, warm_iterations: usize, seed: u64) -> Result<SeqModel> {
    let actor = build_actor(spec, cfg, seed);
    if warm_iterations == 0 {
        return Ok(actor);
    }
    let ppo = PpoConfig {
        iterations: warm_iterations,
        eval_every: warm_iterations,
        eval_prompts: 1,
        eval_samples: 1,
        seed,
        ..PpoConfig::default()
    };
    Ok(run_grpo(spec, &ppo, actor, &mut NoopObserver)?.actor)
}

/// Held-out boundary states reserved for final scores. Model selection never sees them.
pub fn test_benchmark(actor: &SeqModel, spec: &TaskSpec, rule: SegmentRule, n: usize, seed: u64) -> Result<Vec<LabeledState>> {
    build_value_benchmark(
        actor,
        spec,
        &BenchmarkSpec {
            n_states: n,
            rule,
            labeler: Labeler::default(),
            include_terminal: false,
            pool: PromptPool::HeldOut,
            seed,
            split: split::TEST,
        },
    )
}

/// Mean squared error and parse-failure rate of any estimator. A failed
/// estimate counts as [`PARSE_FAILURE_VALUE`].
pub fn score_mse(est: &dyn ValueEstimator, data: &[LabeledState], seed: u64) -> (f64, f64) {
    let (mut sq, mut fails) = (0.0, 0usize);
    for (i, ex) in data.iter().enumerate() {
        let mut r = rng::stream(seed, &[rng::PROBE, 0, i as u64]);
        let v = est.estimate(&ex.state, &mut r);
        fails += v.is_none() as usize;
        sq += (v.unwrap_or(PARSE_FAILURE_VALUE) - ex.value).powi(2);
    }
    let n = data.len().max(1) as f64;
    (sq / n, fails as f64 / n)
}

/// A scalar critic fit at each learning rate in the grid; the best by validation MSE wins.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscFit {
    pub critic: DiscriminativeCritic,
    pub val_mse: f64,
    pub lr: f64,
}

pub fn fit_disc(actor: &SeqModel, spec: &TaskSpec, cap: Capacity, seed: u64, t: &ProbeTraining) -> Result<DiscFit> {
    t.validate()?;
    let mut best: Option<DiscFit> = None;
    for &lr in &t.disc_lrs {
        let cfg = DiscConfig {
            embed_dim: cap.embed_dim,
            hidden: cap.hidden,
            pretrain_lr: lr,
            ..t.disc.clone()
        };
        let (critic, report) = pretrain_disc_critic(actor, spec, &cfg, t.optimizer, seed)?;
        if best.as_ref().is_none_or(|b| report.fit.val_mse < b.val_mse) {
            best = Some(DiscFit {
                critic,
                val_mse: report.fit.val_mse,
                lr,
            });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty learning-rate grid".into()))
}

/// A generative critic and the ICC hint it is read with.
#[derive(Clone, Debug, PartialEq)]
pub struct GenFit {
    pub critic: GenerativeCritic,
    pub hint: f64,
}

impl GenFit {
    pub fn estimator(&self, mode: DecodeMode) -> GenerativeEstimator<'_> {
        GenerativeEstimator::new(&self.critic, self.hint, mode)
    }
}

/// Runs the generative pipeline up to and including `until`, calling `on_stage`
/// after each stage. The hint is the frozen actor's measured success rate.
pub fn fit_gen(
    actor: &SeqModel,
    spec: &TaskSpec,
    gen: &GenConfig,
    until: GenStage,
    seed: u64,
    t: &ProbeTraining,
    mut on_stage: impl FnMut(GenStage, &GenFit) -> Result<()>,
) -> Result<GenFit> {
    let mut fit = GenFit {
        critic: gen.build_critic(spec, actor.param_count(), seed),
        hint: actor_success_rate(actor, spec, seed),
    };
    on_stage(GenStage::Base, &fit)?;
    if until == GenStage::Base {
        return Ok(fit);
    }
    run_sft(&mut fit.critic, actor, spec, gen, t.optimizer, seed)?;
    on_stage(GenStage::Sft, &fit)?;
    if until == GenStage::Sft {
        return Ok(fit);
    }
    pretrain_gen_critic(&mut fit.critic, actor, spec, gen, t.optimizer, seed, t.workers)?;
    on_stage(GenStage::Rl, &fit)?;
    Ok(fit)
}

/// Generative settings at a given capacity.
pub fn gen_at(t: &ProbeTraining, cap: Capacity) -> GenConfig {
    GenConfig {
        embed_dim: cap.embed_dim,
        hidden: cap.hidden,
        ..t.gen.clone()
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::{ConstantEstimator, OracleEstimator};

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // sqrt(5/3)
        assert!((s - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn oracle_scores_zero_and_constant_scores_variance() {
        let spec = TaskSpec::default();
        let mut r = rng::stream(3, &[0]);
        let actor = SeqModel::random(5, 11, 3, 8, 2.0, &mut r);
        let data = test_benchmark(&actor, &spec, SegmentRule::default(), 40, 1).unwrap();
        let oracle = OracleEstimator { policy: &actor, spec: &spec };
        assert_eq!(score_mse(&oracle, &data, 0), (0.0, 0.0));
        let mean = data.iter().map(|e| e.value).sum::<f64>() / data.len() as f64;
        let var = data.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>() / data.len() as f64;
        let (mse, _) = score_mse(&ConstantEstimator(mean), &data, 0);
        assert!((mse - var).abs() < 1e-12);
    }
}
