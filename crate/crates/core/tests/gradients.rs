//! Analytic gradients against central finite differences on random small instances.

mod common;

use common::{fd_grad, rel_err};
use genac_core::critic::{reinforce_critic_loss, CriticEpisode};
use genac_core::rng::{stream, Rng};
use genac_core::train::ppo_actor_loss;
use genac_core::{AdvantageVector, SeqModel, Trajectory};
use rand::Rng as _;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 60;

fn random_model(r: &mut Rng) -> SeqModel {
    let vocab = r.random_range(2..7);
    let window = r.random_range(1..6);
    let embed = r.random_range(1..5);
    let hidden = if r.random_bool(0.3) { 0 } else { r.random_range(1..6) };
    let scale = r.random_range(0.3..1.5);
    SeqModel::random(vocab, window, embed, hidden, scale, r)
}

fn random_tokens(r: &mut Rng, vocab: usize, max: usize) -> Vec<usize> {
    let n = r.random_range(0..=max);
    (0..n).map(|_| r.random_range(0..vocab)).collect()
}

#[test]
fn grad_logprob_matches_finite_differences() {
    for i in 0..INSTANCES {
        let mut r = stream(100, &[i]);
        let model = random_model(&mut r);
        let ctx = random_tokens(&mut r, model.vocab(), 8);
        let tok = r.random_range(0..model.vocab());
        let g = model.grad_logprob(&ctx, tok).unwrap();
        let fd = fd_grad(&model, H, |m| m.logprob(&ctx, tok).unwrap());
        let e = rel_err(&g.0, &fd);
        assert!(e < TOL, "instance {i}: relative error {e:e}");
    }
}

/// Trajectories sampled from `model` whose recorded log-probabilities are
/// shifted so that ratios land on both sides of the clip range, never within
/// `margin` of a kink.
fn ppo_instance(model: &SeqModel, eps: f64, r: &mut Rng) -> (Vec<Trajectory>, Vec<AdvantageVector>) {
    let margin = 0.02;
    let n_traj = r.random_range(1..4);
    let mut trajs = Vec::new();
    let mut advs = Vec::new();
    for _ in 0..n_traj {
        let prompt = random_tokens(r, model.vocab(), 3);
        let len = r.random_range(1..5);
        let mut ctx = prompt.clone();
        let (mut response, mut old, mut adv) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..len {
            let tok = model.sample(&ctx, r);
            let lp = model.logprob(&ctx, tok).unwrap();
            let ratio = loop {
                let q: f64 = r.random_range(0.5..1.6);
                if (q - (1.0 - eps)).abs() > margin && (q - (1.0 + eps)).abs() > margin && (q - 1.0).abs() > margin {
                    break q;
                }
            };
            old.push(lp - ratio.ln());
            adv.push(if r.random_bool(0.5) { r.random_range(0.1..2.0) } else { -r.random_range(0.1..2.0) });
            response.push(tok);
            ctx.push(tok);
        }
        trajs.push(Trajectory {
            prompt,
            response,
            reward: 0.0,
            old_logprobs: old,
        });
        advs.push(AdvantageVector(adv));
    }
    (trajs, advs)
}

#[test]
fn ppo_actor_loss_matches_finite_differences() {
    let eps = 0.2;
    let mut clipped = 0usize;
    for i in 0..INSTANCES {
        let mut r = stream(200, &[i]);
        let model = random_model(&mut r);
        let (trajs, advs) = ppo_instance(&model, eps, &mut r);
        let (_, g) = ppo_actor_loss(&model, &trajs, &advs, eps).unwrap();
        let fd = fd_grad(&model, H, |m| ppo_actor_loss(m, &trajs, &advs, eps).unwrap().0);
        let e = rel_err(&g.0, &fd);
        assert!(e < TOL, "instance {i}: relative error {e:e}");
        for t in &trajs {
            let mut ctx = t.prompt.clone();
            for (&tok, &old) in t.response.iter().zip(&t.old_logprobs) {
                let ratio = (model.logprob(&ctx, tok).unwrap() - old).exp();
                clipped += usize::from((ratio - 1.0).abs() > eps);
                ctx.push(tok);
            }
        }
    }
    // The clipped branch must be exercised.
    assert!(clipped > 0);
}

#[test]
fn reinforce_critic_loss_matches_finite_differences() {
    for i in 0..INSTANCES {
        let mut r = stream(300, &[i]);
        let model = random_model(&mut r);
        let n = r.random_range(1..6);
        let episodes: Vec<CriticEpisode> = (0..n)
            .map(|_| CriticEpisode {
                context: random_tokens(&mut r, model.vocab(), 6),
                trace: {
                    let mut t = random_tokens(&mut r, model.vocab(), 4);
                    t.push(r.random_range(0..model.vocab()));
                    t
                },
                reward: r.random_range(-1.0..1.0),
            })
            .collect();
        let baseline = i % 2 == 0;
        let (_, g) = reinforce_critic_loss(&model, &episodes, baseline);
        let fd = fd_grad(&model, H, |m| reinforce_critic_loss(m, &episodes, baseline).0);
        let e = rel_err(&g.0, &fd);
        assert!(e < TOL, "instance {i}: relative error {e:e}");
    }
}
