//! Distribution-shift probe: critics trained on the base task, scored on
//! progressively more distant tasks.

use serde::{Deserialize, Serialize};

use crate::advantage::SegmentRule;
use crate::critic::{vocab, DecodeMode, DiscriminativeCritic, GenerativeCritic, GenerativeEstimator};
use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::model::SeqModel;
use crate::probes::harness::{frozen_actor, score_mse, test_benchmark};
use crate::probes::SCHEMA_VERSION;
use crate::train::{actor_success_rate, actor_window, ActorConfig};

/// One rung of the shift ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftLevel {
    pub level: usize,
    pub name: String,
    pub spec: TaskSpec,
}

/// Reweights digits by `(i + 1)²`, pushing mass toward large digits.
pub fn skew(dist: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = dist.iter().enumerate().map(|(i, &p)| p * ((i + 1) * (i + 1)) as f64).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `base` with two more digit values that are never drawn.
fn widen(base: &TaskSpec) -> TaskSpec {
    let mut digit_dist = base.digit_dist.clone();
    digit_dist.extend([0.0, 0.0]);
    TaskSpec {
        modulus: base.modulus + 2,
        digit_dist,
        ..base.clone()
    }
}

/// Base task, skewed digits, larger modulus, then larger modulus with longer prompts.
pub fn shift_ladder(base: &TaskSpec) -> Result<Vec<ShiftLevel>> {
    base.validate()?;
    let skewed = TaskSpec {
        digit_dist: skew(&base.digit_dist),
        ..base.clone()
    };
    let wide = widen(base);
    let long = TaskSpec {
        prompt_len: base.prompt_len + 4,
        ..wide.clone()
    };
    let levels = vec![
        ShiftLevel { level: 0, name: "none".into(), spec: base.clone() },
        ShiftLevel { level: 1, name: "skew".into(), spec: skewed },
        ShiftLevel { level: 2, name: "modulus+2".into(), spec: wide },
        ShiftLevel { level: 3, name: "modulus+2,length+4".into(), spec: long },
    ];
    for l in &levels {
        l.spec.validate()?;
    }
    Ok(levels)
}

/// Frozen actor per level. A level that keeps the base vocabulary and window
/// reuses the base actor; otherwise a new actor is built with the same recipe.
pub fn ladder_actors(
    base_actor: &SeqModel,
    ladder: &[ShiftLevel],
    cfg: &ActorConfig,
    warm_iterations: usize,
    seed: u64,
) -> Result<Vec<SeqModel>> {
    ladder
        .iter()
        .map(|l| {
            if base_actor.vocab() == l.spec.modulus && base_actor.net.window == actor_window(&l.spec) {
                Ok(base_actor.clone())
            } else {
                frozen_actor(&l.spec, cfg, warm_iterations, seed)
            }
        })
        .collect()
}

/// `(disc − gen) / disc`.
pub fn reduction(disc: f64, gen: f64) -> f64 {
    (disc - gen) / disc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub schema_version: u32,
    pub level: usize,
    pub shift: String,
    pub modulus: usize,
    pub prompt_len: usize,
    pub states: usize,
    /// Variance of the labels, the MSE of the best constant predictor.
    pub label_variance: f64,
    pub disc_mse: f64,
    pub gen_mse: f64,
    pub gen_parse_failure: f64,
    /// Percent reduction of generative MSE relative to discriminative.
    pub reduction_pct: f64,
}

/// Scores both critics on held-out states of every level. The generative critic
/// is read with the level actor's success rate and size tag.
pub fn ood_probe(
    disc: &DiscriminativeCritic,
    gen: &GenerativeCritic,
    ladder: &[ShiftLevel],
    actors: &[SeqModel],
    rule: SegmentRule,
    n_states: usize,
    seed: u64,
) -> Result<Vec<OodRow>> {
    if ladder.len() != actors.len() {
        return Err(Error::InvalidArgument(format!("{} levels but {} actors", ladder.len(), actors.len())));
    }
    ladder
        .iter()
        .zip(actors)
        .map(|(l, actor)| {
            let data = test_benchmark(actor, &l.spec, rule, n_states, seed)?;
            let est = GenerativeEstimator {
                critic: gen,
                hint: actor_success_rate(actor, &l.spec, seed),
                actor_tag: vocab::actor_tag(actor.param_count()),
                mode: DecodeMode::Greedy,
            };
            let (disc_mse, _) = score_mse(disc, &data, seed);
            let (gen_mse, gen_parse_failure) = score_mse(&est, &data, seed);
            let n = data.len() as f64;
            let mean = data.iter().map(|e| e.value).sum::<f64>() / n;
            let label_variance = data.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>() / n;
            Ok(OodRow {
                schema_version: SCHEMA_VERSION,
                level: l.level,
                shift: l.name.clone(),
                modulus: l.spec.modulus,
                prompt_len: l.spec.prompt_len,
                states: data.len(),
                label_variance,
                disc_mse,
                gen_mse,
                gen_parse_failure,
                reduction_pct: 100.0 * reduction(disc_mse, gen_mse),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_of_reference_pair() {
        let r = 100.0 * reduction(0.0666, 0.0531);
        assert_eq!((r * 10.0).round() / 10.0, 20.3);
    }

    #[test]
    fn ladder_shapes() {
        let base = TaskSpec::default();
        let ladder = shift_ladder(&base).unwrap();
        assert_eq!(ladder[0].spec, base);
        assert_eq!(ladder[1].spec.digit_dist[..2], [0.2, 0.8]);
        assert_eq!(ladder[2].spec.modulus, base.modulus + 2);
        assert_eq!(ladder[2].spec.digit_dist.len(), base.modulus + 2);
        assert_eq!(ladder[3].spec.prompt_len, base.prompt_len + 4);
        assert_eq!(ladder[3].spec.modulus, base.modulus + 2);
    }

    #[test]
    fn skew_is_a_distribution() {
        let s = skew(&[0.2; 5]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        // 0.2·k² / Σ 0.2·j² = k² / 55
        assert!((s[4] - 25.0 / 55.0).abs() < 1e-12);
    }
}
