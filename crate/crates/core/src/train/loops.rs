use crate::advantage::{self, broadcast, gae, segment, terminal_rewards, AdvantageVector};
use crate::critic::generative::{build_context, critic_reward, gen_trace, DecodeMode, IccHint};
use crate::critic::reinforce::{reinforce_critic_loss, CriticEpisode};
use crate::critic::{DiscriminativeCritic, GenerativeCritic, LabeledState, Provenance};
use crate::env::{TaskSpec, Trajectory};
use crate::error::Result;
use crate::model::{Optimizer, SeqModel};
use crate::probes::cost::{step_flops, CriticAccounting};
use crate::rng;

use super::loss::ppo_actor_loss;
use super::{
    evaluate, minibatches, par_map, sample_batch, should_eval, GenConfig, IterationMetrics, MinibatchRecord,
    PpoConfig, TrainObserver,
};

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub metrics: Vec<IterationMetrics>,
    pub actor: SeqModel,
    /// avg@k of the actor before any update.
    pub initial_eval: f64,
}

#[derive(Clone, Debug)]
pub struct VcppoOutput {
    pub train: TrainOutput,
    pub critic: DiscriminativeCritic,
}

#[derive(Clone, Debug)]
pub struct GenacOutput {
    pub train: TrainOutput,
    pub critic: GenerativeCritic,
    pub hint: IccHint,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// One clipped-surrogate step on the selected trajectories; the gradient is
/// averaged over tokens. Returns the mean per-token loss.
fn actor_step(
    actor: &mut SeqModel,
    opt: &mut Optimizer,
    trajs: &[Trajectory],
    advs: &[AdvantageVector],
    cfg: &PpoConfig,
) -> Result<f64> {
    let (loss, mut grad) = ppo_actor_loss(actor, trajs, advs, cfg.clip_eps)?;
    let tokens = trajs.iter().map(|t| t.response.len()).sum::<usize>().max(1) as f64;
    grad.0.iter_mut().for_each(|g| *g /= tokens);
    opt.step(actor.params_mut(), &grad.0, cfg.actor_lr);
    Ok(loss / tokens)
}

struct Counter {
    cumulative: f64,
}

impl Counter {
    fn record(&mut self, accounting: CriticAccounting, pa: usize, pc: usize, actor_tokens: u64, gen_tokens: u64) -> f64 {
        let f = step_flops(accounting, pa, pc, actor_tokens, gen_tokens);
        self.cumulative += f;
        f
    }
}

#[derive(Clone, Copy)]
enum GroupRule {
    Grpo,
    Rloo,
}

fn run_value_free(
    spec: &TaskSpec,
    cfg: &PpoConfig,
    mut actor: SeqModel,
    rule: GroupRule,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutput> {
    cfg.validate()?;
    spec.validate()?;
    let initial_eval = evaluate(&actor, spec, cfg.eval_prompts, cfg.eval_samples, cfg.seed, cfg.workers);
    let mut opt = Optimizer::new(cfg.optimizer, actor.param_count());
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut counter = Counter { cumulative: 0.0 };
    for iter in 0..cfg.iterations {
        let trajs = sample_batch(&actor, spec, cfg, iter);
        let rewards: Vec<f64> = trajs.iter().map(|t| t.reward).collect();
        let mut advs = Vec::with_capacity(trajs.len());
        for (group, g_rewards) in trajs.chunks(cfg.group_size).zip(rewards.chunks(cfg.group_size)) {
            let a = match rule {
                GroupRule::Grpo => advantage::grpo_advantages(g_rewards)?,
                GroupRule::Rloo => advantage::rloo_advantages(g_rewards)?,
            };
            for (t, &ai) in group.iter().zip(&a) {
                advs.push(AdvantageVector::uniform(ai, t.response.len()));
            }
        }
        let mut losses = Vec::new();
        for epoch in 0..cfg.epochs {
            for mb in minibatches(trajs.len(), cfg.minibatch, cfg.seed, iter, epoch) {
                let t: Vec<Trajectory> = mb.iter().map(|&i| trajs[i].clone()).collect();
                let a: Vec<AdvantageVector> = mb.iter().map(|&i| advs[i].clone()).collect();
                losses.push(actor_step(&mut actor, &mut opt, &t, &a, cfg)?);
            }
        }
        let actor_tokens = trajs.iter().map(|t| t.response.len() as u64).sum();
        let flops = counter.record(CriticAccounting::None, actor.param_count(), 0, actor_tokens, 0);
        let m = IterationMetrics {
            iteration: iter,
            mean_reward: mean(rewards.iter().copied()),
            actor_loss: mean(losses),
            critic_loss: None,
            critic_mean_rv: None,
            parse_failure_rate: None,
            icc_hint: None,
            eval_success: should_eval(cfg, iter)
                .then(|| evaluate(&actor, spec, cfg.eval_prompts, cfg.eval_samples, cfg.seed, cfg.workers)),
            actor_tokens,
            critic_gen_tokens: 0,
            flops,
            cumulative_flops: counter.cumulative,
        };
        observer.on_iteration(&m)?;
        metrics.push(m);
    }
    Ok(TrainOutput {
        metrics,
        actor,
        initial_eval,
    })
}

/// PPO with group-normalized rewards as a uniform per-token advantage.
pub fn run_grpo(spec: &TaskSpec, cfg: &PpoConfig, actor: SeqModel, observer: &mut dyn TrainObserver) -> Result<TrainOutput> {
    run_value_free(spec, cfg, actor, GroupRule::Grpo, observer)
}

/// PPO with leave-one-out group baselines.
pub fn run_rloo(spec: &TaskSpec, cfg: &PpoConfig, actor: SeqModel, observer: &mut dyn TrainObserver) -> Result<TrainOutput> {
    run_value_free(spec, cfg, actor, GroupRule::Rloo, observer)
}

/// PPO with a scalar critic scoring every token state. The critic regresses onto
/// the GAE returns `Â_t + v(s_t)` of each minibatch after the actor step.
pub fn run_vcppo(
    spec: &TaskSpec,
    cfg: &PpoConfig,
    mut actor: SeqModel,
    mut critic: DiscriminativeCritic,
    observer: &mut dyn TrainObserver,
) -> Result<VcppoOutput> {
    cfg.validate()?;
    spec.validate()?;
    let initial_eval = evaluate(&actor, spec, cfg.eval_prompts, cfg.eval_samples, cfg.seed, cfg.workers);
    let mut opt = Optimizer::new(cfg.optimizer, actor.param_count());
    let mut critic_opt = Optimizer::new(cfg.optimizer, critic.param_count());
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut counter = Counter { cumulative: 0.0 };
    for iter in 0..cfg.iterations {
        let trajs = sample_batch(&actor, spec, cfg, iter);
        let rewards: Vec<f64> = trajs.iter().map(|t| t.reward).collect();
        let (mut actor_losses, mut critic_losses) = (Vec::new(), Vec::new());
        for epoch in 0..cfg.epochs {
            for mb in minibatches(trajs.len(), cfg.minibatch, cfg.seed, iter, epoch) {
                let t: Vec<Trajectory> = mb.iter().map(|&i| trajs[i].clone()).collect();
                let mut advs = Vec::with_capacity(t.len());
                let mut targets = Vec::new();
                for traj in &t {
                    let n = traj.response.len();
                    let values = (0..n)
                        .map(|k| critic.predict(&traj.state_at(k)))
                        .collect::<Result<Vec<f64>>>()?;
                    let adv = gae(&terminal_rewards(traj.reward, n), &values, cfg.gamma, cfg.lambda)?;
                    for k in 0..n {
                        targets.push(LabeledState::new(traj.state_at(k), adv.0[k] + values[k], Provenance::Return));
                    }
                    advs.push(adv);
                }
                actor_losses.push(actor_step(&mut actor, &mut opt, &t, &advs, cfg)?);
                let refs: Vec<&LabeledState> = targets.iter().collect();
                critic_losses.push(critic.mse_step(&refs, &mut critic_opt, cfg.critic_lr)?);
            }
        }
        let actor_tokens = trajs.iter().map(|t| t.response.len() as u64).sum();
        let flops = counter.record(
            CriticAccounting::Scalar,
            actor.param_count(),
            critic.param_count(),
            actor_tokens,
            0,
        );
        let m = IterationMetrics {
            iteration: iter,
            mean_reward: mean(rewards.iter().copied()),
            actor_loss: mean(actor_losses),
            critic_loss: Some(mean(critic_losses)),
            critic_mean_rv: None,
            parse_failure_rate: None,
            icc_hint: None,
            eval_success: should_eval(cfg, iter)
                .then(|| evaluate(&actor, spec, cfg.eval_prompts, cfg.eval_samples, cfg.seed, cfg.workers)),
            actor_tokens,
            critic_gen_tokens: 0,
            flops,
            cumulative_flops: counter.cumulative,
        };
        observer.on_iteration(&m)?;
        metrics.push(m);
    }
    Ok(VcppoOutput {
        train: TrainOutput {
            metrics,
            actor,
            initial_eval,
        },
        critic,
    })
}

/// Critic output for one segment of one trajectory.
struct SegmentScore {
    episode: CriticEpisode,
    parsed: Option<f64>,
}

/// The generative actor-critic joint loop.
///
/// Per iteration: sample the batch, updating the ICC hint after every trajectory
/// and recording old log-probabilities. Per minibatch: segment each response,
/// score the state before every segment with a sampled critic trace, broadcast
/// the parsed values to tokens, run GAE, take a PPO step on the actor, then a
/// REINFORCE step on the critic with `R_v` as the reward. A trace without a score
/// token gives `R_v = 0` and falls back to the current hint as its value.
pub fn run_genac(
    spec: &TaskSpec,
    cfg: &PpoConfig,
    gen: &GenConfig,
    mut actor: SeqModel,
    mut critic: GenerativeCritic,
    observer: &mut dyn TrainObserver,
) -> Result<GenacOutput> {
    cfg.validate()?;
    spec.validate()?;
    let initial_eval = evaluate(&actor, spec, cfg.eval_prompts, cfg.eval_samples, cfg.seed, cfg.workers);
    let mut opt = Optimizer::new(cfg.optimizer, actor.param_count());
    let mut critic_opt = Optimizer::new(cfg.optimizer, critic.model.param_count());
    let mut hint = IccHint::new(gen.momentum);
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut counter = Counter { cumulative: 0.0 };
    let horizon = spec.horizon();
    let shape = critic.shape;
    for iter in 0..cfg.iterations {
        let trajs = sample_batch(&actor, spec, cfg, iter);
        for t in &trajs {
            hint.update(t.reward);
        }
        let r_bar = hint.value;
        let (mut actor_losses, mut critic_losses, mut rvs) = (Vec::new(), Vec::new(), Vec::new());
        let (mut n_traces, mut n_fail, mut gen_tokens) = (0usize, 0usize, 0u64);
        for epoch in 0..cfg.epochs {
            for (mb_index, mb) in minibatches(trajs.len(), cfg.minibatch, cfg.seed, iter, epoch).into_iter().enumerate() {
                let t: Vec<Trajectory> = mb.iter().map(|&i| trajs[i].clone()).collect();
                let segs = t
                    .iter()
                    .map(|traj| segment(&traj.response, gen.segment))
                    .collect::<Result<Vec<_>>>()?;
                // Critic traces for every (trajectory, segment) pair, each on its own stream.
                let jobs: Vec<(usize, usize, usize)> = segs
                    .iter()
                    .enumerate()
                    .flat_map(|(j, s)| s.starts().into_iter().enumerate().map(move |(k, start)| (j, k, start)))
                    .collect();
                let scored = par_map(cfg.workers, jobs.len(), |q| -> Result<SegmentScore> {
                    let (j, k, start) = jobs[q];
                    let traj = &t[j];
                    let ctx = build_context(&traj.state_at(start), horizon, r_bar, shape.actor_tag, shape.icc_enabled)?;
                    let key = [rng::CRITIC, iter as u64, epoch as u64, mb_index as u64, j as u64, k as u64];
                    let mut r = rng::stream(cfg.seed, &key);
                    let trace = gen_trace(&critic.model, &ctx, DecodeMode::Sample, shape.max_trace_len, &mut r);
                    Ok(SegmentScore {
                        episode: CriticEpisode {
                            context: ctx.tokens,
                            reward: critic_reward(trace.value, traj.reward),
                            trace: trace.tokens,
                        },
                        parsed: trace.value,
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;

                let mut record = MinibatchRecord {
                    iteration: iter,
                    rewards: t.iter().map(|x| x.reward).collect(),
                    segment_lengths: segs.iter().map(|s| s.lengths.clone()).collect(),
                    segment_values: vec![Vec::new(); t.len()],
                    advantages: Vec::with_capacity(t.len()),
                };
                for (q, &(j, _, _)) in jobs.iter().enumerate() {
                    let s = &scored[q];
                    n_traces += 1;
                    gen_tokens += s.episode.trace.len() as u64;
                    if s.parsed.is_none() {
                        n_fail += 1;
                    }
                    rvs.push(s.episode.reward);
                    record.segment_values[j].push(s.parsed.unwrap_or(r_bar));
                }
                let mut advs = Vec::with_capacity(t.len());
                for (j, traj) in t.iter().enumerate() {
                    let values = broadcast(&record.segment_values[j], &segs[j].lengths)?;
                    let adv = gae(&terminal_rewards(traj.reward, traj.response.len()), &values, cfg.gamma, cfg.lambda)?;
                    record.advantages.push(adv.0.clone());
                    advs.push(adv);
                }
                observer.on_minibatch(&record);

                actor_losses.push(actor_step(&mut actor, &mut opt, &t, &advs, cfg)?);
                let episodes: Vec<CriticEpisode> = scored.into_iter().map(|s| s.episode).collect();
                let (closs, grad) = reinforce_critic_loss(&critic.model, &episodes, gen.baseline);
                critic_opt.step(critic.model.params_mut(), &grad.0, cfg.critic_lr);
                critic_losses.push(closs);
            }
        }
        let actor_tokens = trajs.iter().map(|t| t.response.len() as u64).sum();
        let flops = counter.record(
            CriticAccounting::Generative,
            actor.param_count(),
            critic.model.param_count(),
            actor_tokens,
            gen_tokens / cfg.epochs as u64,
        );
        let m = IterationMetrics {
            iteration: iter,
            mean_reward: mean(trajs.iter().map(|t| t.reward)),
            actor_loss: mean(actor_losses),
            critic_loss: Some(mean(critic_losses)),
            critic_mean_rv: Some(mean(rvs)),
            parse_failure_rate: Some(n_fail as f64 / n_traces.max(1) as f64),
            icc_hint: Some(r_bar),
            eval_success: should_eval(cfg, iter)
                .then(|| evaluate(&actor, spec, cfg.eval_prompts, cfg.eval_samples, cfg.seed, cfg.workers)),
            actor_tokens,
            critic_gen_tokens: gen_tokens,
            flops,
            cumulative_flops: counter.cumulative,
        };
        observer.on_iteration(&m)?;
        metrics.push(m);
    }
    Ok(GenacOutput {
        train: TrainOutput {
            metrics,
            actor,
            initial_eval,
        },
        critic,
        hint,
    })
}
