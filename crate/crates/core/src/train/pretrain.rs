use crate::advantage::segment;
use crate::critic::generative::{build_context, critic_reward, gen_trace, CriticContext, DecodeMode, IccHint};
use crate::critic::reinforce::{reinforce_critic_loss, CriticEpisode};
use crate::critic::sft::{sft_fit, synthesize_sft_trace, SftConfig, SftExample};
use crate::critic::{disc_fit, DiscFitConfig, DiscriminativeCritic, FitReport, GenerativeCritic, LabeledState, Provenance};
use crate::env::{self, Policy, TaskSpec};
use crate::error::Result;
use crate::model::{Optimizer, OptimizerKind, SeqModel};
use crate::probes::benchmark::{build_value_benchmark, sample_prompt_in, split, BenchmarkSpec, Labeler, PromptPool};
use crate::rng;

use super::{par_map, DiscConfig, GenConfig};

/// Value predicted for a trace that carries no score token when computing MSE.
pub const PARSE_FAILURE_VALUE: f64 = 0.5;

/// Held-out validation states used for early stopping and model selection.
pub(crate) fn val_benchmark<P: Policy + ?Sized>(actor: &P, spec: &TaskSpec, gen_rule: crate::advantage::SegmentRule, n: usize, seed: u64) -> Result<Vec<LabeledState>> {
    build_value_benchmark(
        actor,
        spec,
        &BenchmarkSpec {
            n_states: n,
            rule: gen_rule,
            labeler: Labeler::default(),
            include_terminal: false,
            pool: PromptPool::HeldOut,
            seed,
            split: split::VAL,
        },
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscPretrainReport {
    pub fit: FitReport,
    pub train_states: usize,
}

/// Fits a scalar critic to the Monte-Carlo returns of a frozen actor: every token
/// state of every rollout is labeled with that rollout's reward. Validation uses
/// held-out boundary states with exact labels.
pub fn pretrain_disc_critic<P: Policy + ?Sized>(
    actor: &P,
    spec: &TaskSpec,
    cfg: &DiscConfig,
    optimizer: OptimizerKind,
    seed: u64,
) -> Result<(DiscriminativeCritic, DiscPretrainReport)> {
    spec.validate()?;
    let mut init = rng::stream(seed, &[rng::INIT, 2]);
    let mut critic = DiscriminativeCritic::random(spec.prompt_len, spec.horizon(), cfg.embed_dim, cfg.hidden, &mut init);
    let mut train = Vec::new();
    for i in 0..cfg.pretrain_prompts {
        let mut r = rng::stream(seed, &[rng::BENCH, split::TRAIN, i as u64]);
        let prompt = sample_prompt_in(spec, PromptPool::Train, &mut r)?;
        let traj = env::rollout(actor, spec, &prompt, &mut r);
        for t in 0..traj.response.len() {
            train.push(LabeledState::new(traj.state_at(t), traj.reward, Provenance::Return));
        }
    }
    let val = val_benchmark(actor, spec, Default::default(), cfg.val_states, seed)?;
    let fit_cfg = DiscFitConfig {
        lr: cfg.pretrain_lr,
        max_steps: cfg.pretrain_steps,
        batch: cfg.batch,
        optimizer,
        eval_every: cfg.eval_every,
        patience: cfg.patience,
        min_delta: cfg.min_delta,
    };
    let mut r = rng::stream(seed, &[rng::MINIBATCH, u64::MAX, 2]);
    let fit = disc_fit(&mut critic, &train, &val, &fit_cfg, &mut r)?;
    Ok((
        critic,
        DiscPretrainReport {
            fit,
            train_states: train.len(),
        },
    ))
}

/// Mean squared error of a generative critic and its parse-failure rate. A failed
/// parse is scored as [`PARSE_FAILURE_VALUE`].
pub fn evaluate_gen_critic(
    critic: &GenerativeCritic,
    data: &[LabeledState],
    hint: f64,
    mode: DecodeMode,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64)> {
    let out = par_map(workers, data.len(), |i| -> Result<(f64, bool)> {
        let mut r = rng::stream(seed, &[rng::PROBE, 0, i as u64]);
        let trace = critic.trace(&data[i].state, hint, mode, &mut r)?;
        let v = trace.value.unwrap_or(PARSE_FAILURE_VALUE);
        Ok(((v - data[i].value).powi(2), trace.value.is_none()))
    });
    let mut sq = 0.0;
    let mut fails = 0usize;
    for o in out {
        let (e, f) = o?;
        sq += e;
        fails += f as usize;
    }
    let n = data.len().max(1) as f64;
    Ok((sq / n, fails as f64 / n))
}

/// Share of contexts whose greedy trace has no score token.
pub fn parse_failure_rate(model: &SeqModel, contexts: &[CriticContext], max_len: usize) -> f64 {
    let mut r = rng::stream(0, &[0]);
    let fails = contexts
        .iter()
        .filter(|c| gen_trace(model, c, DecodeMode::Greedy, max_len, &mut r).value.is_none())
        .count();
    fails as f64 / contexts.len().max(1) as f64
}

/// Scripted traces for frozen-actor states with exact value labels. The ICC hint
/// in every context is the actor's mean reward over the sampled rollouts.
pub fn build_sft_dataset<P: Policy + ?Sized>(
    actor: &P,
    spec: &TaskSpec,
    critic: &GenerativeCritic,
    cfg: &GenConfig,
    n_states: usize,
    pool: PromptPool,
    data_split: u64,
    seed: u64,
) -> Result<(Vec<SftExample>, f64)> {
    let states = build_value_benchmark(
        actor,
        spec,
        &BenchmarkSpec {
            n_states,
            rule: cfg.segment,
            labeler: Labeler::default(),
            include_terminal: false,
            pool,
            seed,
            split: data_split,
        },
    )?;
    let hint = actor_success_rate(actor, spec, seed);
    let mut r = rng::stream(seed, &[rng::SFT, data_split]);
    let data = states
        .iter()
        .map(|ex| -> Result<SftExample> {
            let ctx = critic.context(&ex.state, hint)?;
            Ok(synthesize_sft_trace(&ex.state, spec, ctx, ex.value, cfg.sft_noise, cfg.reasoning, &mut r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((data, hint))
}

/// Mean reward of 256 sampled rollouts.
pub fn actor_success_rate<P: Policy + ?Sized>(actor: &P, spec: &TaskSpec, seed: u64) -> f64 {
    let n = 256;
    let total: f64 = (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, &[rng::EVAL, u64::MAX, i]);
            let prompt = env::sample_prompt(spec, &mut r);
            env::rollout(actor, spec, &prompt, &mut r).reward
        })
        .sum();
    total / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SftReport {
    pub nll_curve: Vec<f64>,
    pub held_out_parse_failure: f64,
    pub val_mse: f64,
    pub hint: f64,
}

/// Supervised stage: synthesize traces and fit the critic by maximum likelihood.
pub fn run_sft<P: Policy + ?Sized>(
    critic: &mut GenerativeCritic,
    actor: &P,
    spec: &TaskSpec,
    cfg: &GenConfig,
    optimizer: OptimizerKind,
    seed: u64,
) -> Result<SftReport> {
    let (data, hint) = build_sft_dataset(actor, spec, critic, cfg, cfg.sft_prompts, PromptPool::Train, split::SFT, seed)?;
    let (held_out, _) = build_sft_dataset(actor, spec, critic, cfg, 200, PromptPool::HeldOut, split::SFT_HELD_OUT, seed)?;
    let sft_cfg = SftConfig {
        lr: cfg.sft_lr,
        steps: cfg.sft_steps,
        batch: cfg.sft_batch,
        optimizer,
    };
    let mut r = rng::stream(seed, &[rng::SFT, u64::MAX]);
    let nll_curve = sft_fit(&mut critic.model, &data, &sft_cfg, &mut r)?;
    let contexts: Vec<CriticContext> = held_out.iter().map(|e| CriticContext { tokens: e.context.clone() }).collect();
    let held_out_parse_failure = parse_failure_rate(&critic.model, &contexts, critic.shape.max_trace_len);
    let val = val_benchmark(actor, spec, cfg.segment, cfg.val_states, seed)?;
    let (val_mse, _) = evaluate_gen_critic(critic, &val, hint, cfg.eval_decode, seed, 1)?;
    Ok(SftReport {
        nll_curve,
        held_out_parse_failure,
        val_mse,
        hint,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenPretrainReport {
    /// Mean critic reward `R_v` per iteration.
    pub rv_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    pub val_mse: f64,
    pub parse_failure: f64,
    pub iterations: usize,
    pub hint: f64,
}

/// REINFORCE on `R_v` against a frozen actor: sample rollouts, score the state
/// before every segment with a sampled trace, and reward each trace by how well
/// its value matches the rollout's reward. Stops once validation MSE saturates
/// and keeps the best parameters.
pub fn pretrain_gen_critic<P: Policy + ?Sized>(
    critic: &mut GenerativeCritic,
    actor: &P,
    spec: &TaskSpec,
    cfg: &GenConfig,
    optimizer: OptimizerKind,
    seed: u64,
    workers: usize,
) -> Result<GenPretrainReport> {
    spec.validate()?;
    let val = val_benchmark(actor, spec, cfg.segment, cfg.val_states, seed)?;
    let mut opt = Optimizer::new(optimizer, critic.model.param_count());
    let mut hint = IccHint::new(cfg.momentum);
    let shape = critic.shape;
    let horizon = spec.horizon();
    let mut report = GenPretrainReport {
        rv_curve: Vec::new(),
        val_curve: Vec::new(),
        val_mse: f64::INFINITY,
        parse_failure: 1.0,
        iterations: 0,
        hint: 0.0,
    };
    let mut best = critic.model.params().to_vec();
    let mut stale = 0;
    for it in 0..cfg.rl_iterations {
        let trajs = (0..cfg.rl_prompts)
            .map(|i| {
                let mut r = rng::stream(seed, &[rng::BENCH, split::RL, it as u64, i as u64]);
                let prompt = sample_prompt_in(spec, PromptPool::Train, &mut r)?;
                Ok(env::rollout(actor, spec, &prompt, &mut r))
            })
            .collect::<Result<Vec<_>>>()?;
        for t in &trajs {
            hint.update(t.reward);
        }
        let r_bar = hint.value;
        let mut jobs = Vec::new();
        for (j, t) in trajs.iter().enumerate() {
            for (k, start) in segment(&t.response, cfg.segment)?.starts().into_iter().enumerate() {
                jobs.push((j, k, start));
            }
        }
        let episodes = par_map(workers, jobs.len(), |q| -> Result<CriticEpisode> {
            let (j, k, start) = jobs[q];
            let traj = &trajs[j];
            let ctx = build_context(&traj.state_at(start), horizon, r_bar, shape.actor_tag, shape.icc_enabled)?;
            let mut r = rng::stream(seed, &[rng::CRITIC, u64::MAX, it as u64, j as u64, k as u64]);
            let trace = gen_trace(&critic.model, &ctx, DecodeMode::Sample, shape.max_trace_len, &mut r);
            Ok(CriticEpisode {
                context: ctx.tokens,
                reward: critic_reward(trace.value, traj.reward),
                trace: trace.tokens,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        report.rv_curve.push(episodes.iter().map(|e| e.reward).sum::<f64>() / episodes.len().max(1) as f64);
        let (_, grad) = reinforce_critic_loss(&critic.model, &episodes, cfg.baseline);
        opt.step(critic.model.params_mut(), &grad.0, cfg.rl_lr);
        report.iterations = it + 1;
        report.hint = r_bar;

        if (it + 1) % cfg.eval_every.max(1) == 0 || it + 1 == cfg.rl_iterations {
            let (m, fail) = evaluate_gen_critic(critic, &val, r_bar, cfg.eval_decode, seed, workers)?;
            report.val_curve.push(m);
            if m < report.val_mse - cfg.min_delta {
                stale = 0;
            } else {
                stale += 1;
            }
            if m < report.val_mse {
                report.val_mse = m;
                report.parse_failure = fail;
                best.copy_from_slice(critic.model.params());
            }
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if report.val_curve.is_empty() {
        let (m, fail) = evaluate_gen_critic(critic, &val, hint.value, cfg.eval_decode, seed, workers)?;
        report.val_mse = m;
        report.parse_failure = fail;
    } else {
        critic.model.params_mut().copy_from_slice(&best);
    }
    Ok(report)
}
