use crate::advantage::AdvantageVector;
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::model::{GradientVector, SeqModel};

/// Clipped surrogate summed over every token of every trajectory:
/// `−Σ min(ρ_t Â_t, clip(ρ_t, 1−ε, 1+ε) Â_t)` with `ρ_t = π_θ / π_old`.
///
/// Tokens where the clipped branch is the minimum and the ratio lies outside the
/// clip range contribute nothing to the gradient.
pub fn ppo_actor_loss(
    model: &SeqModel,
    trajectories: &[Trajectory],
    advantages: &[AdvantageVector],
    clip_eps: f64,
) -> Result<(f64, GradientVector)> {
    if trajectories.len() != advantages.len() {
        return Err(Error::LengthMismatch {
            what: "advantage vectors",
            expected: trajectories.len(),
            got: advantages.len(),
        });
    }
    let mut grad = GradientVector::zeros(model.param_count());
    let mut loss = 0.0;
    for (traj, adv) in trajectories.iter().zip(advantages) {
        let n = traj.response.len();
        if traj.old_logprobs.len() != n {
            return Err(Error::Missing(format!(
                "old log-probabilities: {} recorded for {} response tokens",
                traj.old_logprobs.len(),
                n
            )));
        }
        if adv.len() != n {
            return Err(Error::LengthMismatch {
                what: "advantages",
                expected: n,
                got: adv.len(),
            });
        }
        let mut ctx = traj.prompt.clone();
        for t in 0..n {
            let tok = traj.response[t];
            let a = adv.0[t];
            let pass = model.token_pass(&ctx, tok);
            let ratio = (pass.logprob - traj.old_logprobs[t]).exp();
            let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
            let unclipped_term = ratio * a;
            let clipped_term = clipped * a;
            loss -= unclipped_term.min(clipped_term);
            // The gradient flows through ρ unless the clipped branch is strictly smaller.
            if unclipped_term <= clipped_term && a != 0.0 {
                model.backprop(&pass, -a * ratio, &mut grad.0);
            }
            ctx.push(tok);
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, TaskSpec};
    use crate::rng;

    fn setup() -> (SeqModel, Vec<Trajectory>, Vec<AdvantageVector>) {
        let spec = TaskSpec::uniform(3, 2, 0);
        let mut r = rng::stream(9, &[0]);
        let model = SeqModel::random(3, 3, 2, 4, 1.0, &mut r);
        let trajs: Vec<Trajectory> = (0..4).map(|i| rollout(&model, &spec, &[i % 3, 1], &mut r)).collect();
        let advs = trajs.iter().enumerate().map(|(i, t)| AdvantageVector::uniform(i as f64 - 1.5, t.response.len())).collect();
        (model, trajs, advs)
    }

    #[test]
    fn ratio_one_reduces_to_policy_gradient() {
        let (model, trajs, advs) = setup();
        let (loss, g) = ppo_actor_loss(&model, &trajs, &advs, 0.2).unwrap();
        let total_adv: f64 = advs.iter().flat_map(|a| a.0.iter()).sum();
        assert!((loss + total_adv).abs() < 1e-10);
        let mut want = vec![0.0; model.param_count()];
        for (t, a) in trajs.iter().zip(&advs) {
            let mut ctx = t.prompt.clone();
            for (i, &tok) in t.response.iter().enumerate() {
                model.accumulate_logprob_grad(&ctx, tok, -a.0[i], &mut want);
                ctx.push(tok);
            }
        }
        for (x, y) in g.0.iter().zip(&want) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn saturated_clip_kills_gradient() {
        let (model, mut trajs, advs) = setup();
        // ρ = 1.5 on every token: positive advantages saturate, negative ones do not.
        for t in &mut trajs {
            for lp in &mut t.old_logprobs {
                *lp -= 1.5f64.ln();
            }
        }
        let pos: Vec<usize> = (0..4).filter(|&i| advs[i].0[0] > 0.0).collect();
        let sub_t: Vec<Trajectory> = pos.iter().map(|&i| trajs[i].clone()).collect();
        let sub_a: Vec<AdvantageVector> = pos.iter().map(|&i| advs[i].clone()).collect();
        let (loss, g) = ppo_actor_loss(&model, &sub_t, &sub_a, 0.2).unwrap();
        assert!(g.0.iter().all(|&x| x == 0.0));
        let want: f64 = sub_a.iter().flat_map(|a| a.0.iter()).map(|a| -1.2 * a).sum();
        assert!((loss - want).abs() < 1e-10);
    }

    #[test]
    fn missing_old_logprobs_is_an_error() {
        let (model, mut trajs, advs) = setup();
        trajs[1].old_logprobs.clear();
        assert!(matches!(ppo_actor_loss(&model, &trajs, &advs, 0.2), Err(Error::Missing(_))));
        assert!(ppo_actor_loss(&model, &trajs[..2], &advs, 0.2).is_err());
    }
}
