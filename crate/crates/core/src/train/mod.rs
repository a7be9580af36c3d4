//! Training loops: the PPO clipped surrogate, value-free trainers (GRPO, RLOO),
//! PPO with a scalar critic, the generative actor-critic joint loop, and the
//! critic pretraining stages.

mod loops;
mod loss;
mod pipeline;
mod pretrain;

pub use loops::{run_genac, run_grpo, run_rloo, run_vcppo, GenacOutput, TrainOutput, VcppoOutput};
pub use loss::ppo_actor_loss;
pub use pipeline::{run_genac_pipeline, run_vcppo_pipeline, GenacPipeline, VcppoPipeline};
pub(crate) use pretrain::val_benchmark;
pub use pretrain::{
    actor_success_rate, build_sft_dataset, evaluate_gen_critic, parse_failure_rate, pretrain_disc_critic, pretrain_gen_critic, run_sft, DiscPretrainReport,
    GenPretrainReport, SftReport, PARSE_FAILURE_VALUE,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::SegmentRule;
use crate::critic::generative::{DecodeMode, TemplateShape};
use crate::critic::vocab;
use crate::critic::GenerativeCritic;
use crate::env::{self, TaskSpec, Token, Trajectory};
use crate::error::{Error, Result};
use crate::model::{OptimizerKind, SeqModel};
use crate::rng;

/// Actor network shape. The context window always covers the full prompt and
/// every earlier response token (`2m − 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActorConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub init_scale: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            embed_dim: 8,
            hidden: 32,
            init_scale: 1.0,
        }
    }
}

pub fn actor_window(spec: &TaskSpec) -> usize {
    spec.prompt_len + spec.horizon() - 1
}

pub fn build_actor(spec: &TaskSpec, cfg: &ActorConfig, seed: u64) -> SeqModel {
    let mut r = rng::stream(seed, &[rng::INIT, 0]);
    SeqModel::random(spec.modulus, actor_window(spec), cfg.embed_dim, cfg.hidden, cfg.init_scale, &mut r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Prompts per iteration `B`.
    pub batch_prompts: usize,
    /// Responses per prompt `G`.
    pub group_size: usize,
    /// Trajectories per minibatch `b`.
    pub minibatch: usize,
    pub epochs: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub eval_every: usize,
    pub eval_prompts: usize,
    /// Sampled responses per evaluation prompt (avg@k).
    pub eval_samples: usize,
    /// Set by the run rather than the config file.
    #[serde(skip)]
    pub seed: u64,
    /// Threads for rollouts and critic traces; results do not depend on it.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 1.0,
            lambda: 1.0,
            batch_prompts: 64,
            group_size: 8,
            minibatch: 128,
            epochs: 1,
            actor_lr: 1e-2,
            critic_lr: 1e-2,
            optimizer: OptimizerKind::adam(),
            iterations: 300,
            eval_every: 10,
            eval_prompts: 64,
            eval_samples: 16,
            seed: 0,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be > 0, got {}", self.clip_eps));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]".into());
        }
        if self.batch_prompts == 0 || self.group_size == 0 || self.minibatch == 0 || self.epochs == 0 {
            return bad("batch_prompts, group_size, minibatch and epochs must be >= 1".into());
        }
        if self.eval_prompts == 0 || self.eval_samples == 0 {
            return bad("eval_prompts and eval_samples must be >= 1".into());
        }
        Ok(())
    }

    pub fn batch_trajectories(&self) -> usize {
        self.batch_prompts * self.group_size
    }
}

/// Scalar critic settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    /// Pretraining rollouts from the frozen actor.
    pub pretrain_prompts: usize,
    pub pretrain_lr: f64,
    pub pretrain_steps: usize,
    pub batch: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Held-out states with exact labels for validation.
    pub val_states: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            embed_dim: 8,
            hidden: 32,
            pretrain_prompts: 512,
            pretrain_lr: 1e-2,
            pretrain_steps: 3000,
            batch: 32,
            eval_every: 50,
            patience: 10,
            min_delta: 1e-4,
            val_states: 256,
        }
    }
}

/// Generative critic settings, covering all three training stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub icc_enabled: bool,
    /// ICC momentum `c`.
    pub momentum: f64,
    pub max_trace_len: usize,
    pub segment: SegmentRule,
    /// Emit reasoning tokens before the score in synthesized traces.
    pub reasoning: bool,
    /// Label noise `η` of the scripted trace oracle.
    pub sft_noise: f64,
    pub sft_prompts: usize,
    pub sft_lr: f64,
    pub sft_steps: usize,
    pub sft_batch: usize,
    /// REINFORCE pretraining iterations against a frozen actor.
    pub rl_iterations: usize,
    pub rl_prompts: usize,
    pub rl_lr: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub val_states: usize,
    /// Mean-reward baseline in the critic REINFORCE loss.
    pub baseline: bool,
    /// Decoding used when the critic is evaluated rather than trained.
    pub eval_decode: DecodeMode,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            embed_dim: 8,
            hidden: 32,
            icc_enabled: true,
            momentum: 0.99,
            max_trace_len: 8,
            segment: SegmentRule::default(),
            reasoning: true,
            sft_noise: 0.1,
            sft_prompts: 512,
            sft_lr: 1e-2,
            sft_steps: 1500,
            sft_batch: 32,
            rl_iterations: 200,
            rl_prompts: 64,
            rl_lr: 1e-3,
            eval_every: 10,
            patience: 10,
            min_delta: 1e-4,
            val_states: 256,
            baseline: false,
            eval_decode: DecodeMode::Greedy,
        }
    }
}

impl GenConfig {
    pub fn shape(&self, spec: &TaskSpec, actor_params: usize) -> TemplateShape {
        TemplateShape {
            prompt_len: spec.prompt_len,
            horizon: spec.horizon(),
            icc_enabled: self.icc_enabled,
            max_trace_len: self.max_trace_len,
            actor_tag: vocab::actor_tag(actor_params),
        }
    }

    pub fn build_critic(&self, spec: &TaskSpec, actor_params: usize, seed: u64) -> GenerativeCritic {
        let mut r = rng::stream(seed, &[rng::INIT, 1]);
        GenerativeCritic::new(self.shape(spec, actor_params), self.embed_dim, self.hidden, &mut r)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: Option<f64>,
    pub critic_mean_rv: Option<f64>,
    pub parse_failure_rate: Option<f64>,
    pub icc_hint: Option<f64>,
    /// avg@k success on held-out prompts, on evaluation iterations only.
    pub eval_success: Option<f64>,
    pub actor_tokens: u64,
    pub critic_gen_tokens: u64,
    pub flops: f64,
    pub cumulative_flops: f64,
}

/// Per-minibatch view of the joint loop, for checking advantage wiring.
#[derive(Clone, Debug, PartialEq)]
pub struct MinibatchRecord {
    pub iteration: usize,
    pub rewards: Vec<f64>,
    /// Segment lengths per trajectory.
    pub segment_lengths: Vec<Vec<usize>>,
    /// Parsed (or fallback) value per segment.
    pub segment_values: Vec<Vec<f64>>,
    pub advantages: Vec<Vec<f64>>,
}

/// Receives progress from a trainer.
pub trait TrainObserver {
    fn on_iteration(&mut self, _metrics: &IterationMetrics) -> Result<()> {
        Ok(())
    }
    fn on_minibatch(&mut self, _record: &MinibatchRecord) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Maps `f` over `0..n`, on `workers` threads when more than one is requested.
/// Output order is always index order.
pub(crate) fn par_map<T: Send>(workers: usize, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if workers <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

/// Training prompt `i` of iteration `iter`.
pub fn train_prompt(spec: &TaskSpec, seed: u64, iter: usize, i: usize) -> Vec<Token> {
    let mut r = rng::stream(seed, &[rng::PROMPTS, iter as u64, i as u64]);
    env::sample_prompt(spec, &mut r)
}

/// `B` prompts with `G` responses each, grouped consecutively.
pub fn sample_batch(actor: &SeqModel, spec: &TaskSpec, cfg: &PpoConfig, iter: usize) -> Vec<Trajectory> {
    let g = cfg.group_size;
    par_map(cfg.workers, cfg.batch_trajectories(), |j| {
        let prompt = train_prompt(spec, cfg.seed, iter, j / g);
        let mut r = rng::stream(cfg.seed, &[rng::ROLLOUT, iter as u64, j as u64]);
        env::rollout(actor, spec, &prompt, &mut r)
    })
}

/// avg@k: mean success over `samples` sampled responses on each of `n_prompts`
/// held-out prompts. The sampling streams are fixed, so repeated evaluations of
/// one actor agree exactly.
pub fn evaluate(actor: &SeqModel, spec: &TaskSpec, n_prompts: usize, samples: usize, seed: u64, workers: usize) -> f64 {
    let hits = par_map(workers, n_prompts, |i| {
        let prompt = spec.prompt(rng::EVAL, i as u64);
        (0..samples)
            .map(|s| {
                let mut r = rng::stream(seed, &[rng::EVAL, i as u64, s as u64]);
                env::rollout(actor, spec, &prompt, &mut r).reward
            })
            .sum::<f64>()
    });
    hits.iter().sum::<f64>() / (n_prompts * samples) as f64
}

pub(crate) fn should_eval(cfg: &PpoConfig, iter: usize) -> bool {
    (iter + 1).is_multiple_of(cfg.eval_every.max(1)) || iter + 1 == cfg.iterations
}

/// Shuffled minibatches of trajectory indices for one epoch.
pub(crate) fn minibatches(n: usize, size: usize, seed: u64, iter: usize, epoch: usize) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, &[rng::MINIBATCH, iter as u64, epoch as u64]);
    idx.shuffle(&mut r);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_is_deterministic_and_worker_independent() {
        let spec = TaskSpec::default();
        let actor = build_actor(&spec, &ActorConfig::default(), 3);
        let a = evaluate(&actor, &spec, 8, 16, 1, 1);
        let b = evaluate(&actor, &spec, 8, 16, 1, 3);
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn batches_are_grouped_and_worker_independent() {
        let spec = TaskSpec::default();
        let actor = build_actor(&spec, &ActorConfig::default(), 3);
        let cfg = PpoConfig { batch_prompts: 4, group_size: 3, ..PpoConfig::default() };
        let a = sample_batch(&actor, &spec, &cfg, 0);
        let b = sample_batch(&actor, &spec, &PpoConfig { workers: 4, ..cfg.clone() }, 0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        for g in a.chunks(3) {
            assert!(g.iter().all(|t| t.prompt == g[0].prompt));
        }
    }

    #[test]
    fn minibatches_partition_indices() {
        let mb = minibatches(10, 4, 0, 0, 0);
        assert_eq!(mb.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = mb.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
