//! Ranking probe under reference scorers.

use genac_core::critic::{OracleEstimator, RandomEstimator};
use genac_core::probes::{ranking_probe, PromptPool, RankingSpec};
use genac_core::train::{build_actor, ActorConfig};
use genac_core::{SegmentRule, TaskSpec};

fn probe(seed: u64) -> RankingSpec {
    RankingSpec {
        n_prompts: 2000,
        rule: SegmentRule::default(),
        pool: PromptPool::HeldOut,
        seed,
    }
}

#[test]
fn oracle_ranks_perfectly() {
    let spec = TaskSpec::default();
    let actor = build_actor(&spec, &ActorConfig::default(), 0);
    let oracle = OracleEstimator { policy: &actor, spec: &spec };
    for row in ranking_probe(&oracle, &actor, &spec, &[2, 4, 8], &probe(1)).unwrap() {
        assert_eq!(row.top1_accuracy, 1.0, "pool {}", row.pool_size);
    }
}

#[test]
fn random_scorer_is_at_chance() {
    let spec = TaskSpec::default();
    let actor = build_actor(&spec, &ActorConfig::default(), 0);
    for row in ranking_probe(&RandomEstimator, &actor, &spec, &[2, 4, 8], &probe(2)).unwrap() {
        let k = row.pool_size as f64;
        let sigma = ((1.0 / k) * (1.0 - 1.0 / k) / row.prompts as f64).sqrt();
        assert!(
            (row.top1_accuracy - 1.0 / k).abs() <= 3.0 * sigma,
            "pool {}: {} vs {}",
            row.pool_size,
            row.top1_accuracy,
            1.0 / k
        );
    }
}
