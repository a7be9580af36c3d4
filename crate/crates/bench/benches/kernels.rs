use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use genac_core::advantage::{gae, grpo_advantages};
use genac_core::critic::{gen_trace, reinforce_critic_loss, CriticEpisode, DecodeMode, DiscriminativeCritic};
use genac_core::env::{exact_value, rollout, sample_prompt};
use genac_core::probes::{cost_model, CostMethod, CostParams};
use genac_core::rng::stream;
use genac_core::train::{build_actor, ActorConfig, GenConfig};
use genac_core::{MdpState, TaskSpec};

fn actor_kernels(c: &mut Criterion) {
    let spec = TaskSpec::default();
    let actor = build_actor(&spec, &ActorConfig::default(), 0);
    let ctx = vec![1, 0, 1, 1, 0, 1, 3, 2];
    c.bench_function("actor_logits", |b| b.iter(|| actor.logits(black_box(&ctx))));
    c.bench_function("actor_grad_logprob", |b| b.iter(|| actor.grad_logprob(black_box(&ctx), 2).unwrap()));
    c.bench_function("rollout_default_task", |b| {
        let mut r = stream(0, &[1]);
        b.iter(|| {
            let p = sample_prompt(&spec, &mut r);
            rollout(&actor, &spec, &p, &mut r)
        })
    });
    let state = MdpState::new(vec![1, 0, 1, 1, 0, 1], vec![3, 2]);
    c.bench_function("exact_value_four_steps_left", |b| {
        b.iter(|| exact_value(black_box(&state), &actor, &spec).unwrap())
    });
}

fn critic_kernels(c: &mut Criterion) {
    let spec = TaskSpec::default();
    let gen = GenConfig::default();
    let critic = gen.build_critic(&spec, 1000, 0);
    let state = MdpState::new(vec![1, 0, 1, 1, 0, 1], vec![3, 2]);
    let ctx = critic.context(&state, 0.5).unwrap();
    c.bench_function("gen_trace_sampled", |b| {
        let mut r = stream(0, &[2]);
        b.iter(|| gen_trace(&critic.model, &ctx, DecodeMode::Sample, gen.max_trace_len, &mut r))
    });
    let episodes: Vec<CriticEpisode> = (0..64)
        .map(|i| {
            let mut r = stream(0, &[3, i]);
            let t = gen_trace(&critic.model, &ctx, DecodeMode::Sample, gen.max_trace_len, &mut r);
            CriticEpisode {
                context: ctx.tokens.clone(),
                trace: t.tokens,
                reward: (i % 3) as f64 / 2.0,
            }
        })
        .collect();
    c.bench_function("reinforce_loss_64_episodes", |b| {
        b.iter(|| reinforce_critic_loss(&critic.model, black_box(&episodes), true))
    });
    let mut r = stream(0, &[4]);
    let disc = DiscriminativeCritic::random(6, 6, 8, 32, &mut r);
    c.bench_function("disc_predict", |b| b.iter(|| disc.predict(black_box(&state)).unwrap()));
}

fn advantage_kernels(c: &mut Criterion) {
    let rewards = vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    let values = vec![0.4, 0.4, 0.5, 0.5, 0.6, 0.6];
    c.bench_function("gae_six_tokens", |b| b.iter(|| gae(black_box(&rewards), black_box(&values), 1.0, 1.0).unwrap()));
    let group: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
    c.bench_function("grpo_group_of_8", |b| b.iter(|| grpo_advantages(black_box(&group)).unwrap()));
    c.bench_function("cost_model_all_methods", |b| {
        b.iter_batched(
            || CostParams::reference(1e9, 1e6),
            |p| CostMethod::ALL.map(|m| cost_model(&p, m).unwrap().flops),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, actor_kernels, critic_kernels, advantage_kernels);
criterion_main!(benches);
