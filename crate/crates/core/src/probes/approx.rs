//! Approximation sweep: held-out MSE of both critic families across capacities and seeds.

use serde::{Deserialize, Serialize};

use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::model::SeqModel;
use crate::probes::harness::{
    fit_disc, fit_gen, gen_at, mean_std, score_mse, test_benchmark, Capacity, CriticFamily, GenStage, ProbeTraining,
};
use crate::probes::SCHEMA_VERSION;
use crate::train::{par_map, val_benchmark};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSpec {
    pub families: Vec<CriticFamily>,
    pub capacities: Vec<Capacity>,
    pub n_seeds: usize,
    /// Critic seeds are `seed, seed + 1, ...`; the test benchmark uses `seed`.
    pub seed: u64,
}

/// One trained critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub schema_version: u32,
    pub family: CriticFamily,
    pub embed_dim: usize,
    pub hidden: usize,
    pub params: usize,
    pub seed: u64,
    pub val_mse: f64,
    pub test_mse: f64,
    pub parse_failure: f64,
}

/// Mean and sample std of test MSE over seeds for one (family, capacity).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSummary {
    pub schema_version: u32,
    pub family: CriticFamily,
    pub embed_dim: usize,
    pub hidden: usize,
    pub params: usize,
    pub seeds: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
}

pub fn approx_sweep(actor: &SeqModel, spec: &TaskSpec, sweep: &ApproxSpec, t: &ProbeTraining) -> Result<Vec<ApproxRow>> {
    if sweep.n_seeds < 2 {
        return Err(Error::InvalidArgument(format!("approx sweep needs at least 2 seeds, got {}", sweep.n_seeds)));
    }
    t.validate()?;
    let test = test_benchmark(actor, spec, t.gen.segment, t.test_states, sweep.seed)?;
    let mut cells = Vec::new();
    for &family in &sweep.families {
        for &cap in &sweep.capacities {
            for i in 0..sweep.n_seeds {
                cells.push((family, cap, sweep.seed + i as u64));
            }
        }
    }
    // Cells run in parallel; each cell then trains single-threaded.
    let inner = ProbeTraining { workers: 1, ..t.clone() };
    par_map(t.workers, cells.len(), |c| {
        let (family, cap, seed) = cells[c];
        let (params, val_mse, (test_mse, parse_failure)) = match family {
            CriticFamily::Disc => {
                let fit = fit_disc(actor, spec, cap, seed, &inner)?;
                (fit.critic.param_count(), fit.val_mse, score_mse(&fit.critic, &test, seed))
            }
            CriticFamily::Gen => {
                let gen = gen_at(&inner, cap);
                let fit = fit_gen(actor, spec, &gen, GenStage::Rl, seed, &inner, |_, _| Ok(()))?;
                let est = fit.estimator(gen.eval_decode);
                let val = val_benchmark(actor, spec, gen.segment, gen.val_states, seed)?;
                let (val_mse, _) = score_mse(&est, &val, seed);
                (fit.critic.model.param_count(), val_mse, score_mse(&est, &test, seed))
            }
        };
        Ok(ApproxRow {
            schema_version: SCHEMA_VERSION,
            family,
            embed_dim: cap.embed_dim,
            hidden: cap.hidden,
            params,
            seed,
            val_mse,
            test_mse,
            parse_failure,
        })
    })
    .into_iter()
    .collect()
}

/// Groups rows by (family, capacity) in first-seen order.
pub fn summarize(rows: &[ApproxRow]) -> Vec<ApproxSummary> {
    let mut keys: Vec<(CriticFamily, usize, usize)> = Vec::new();
    for r in rows {
        let k = (r.family, r.embed_dim, r.hidden);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(family, embed_dim, hidden)| {
            let cell: Vec<&ApproxRow> =
                rows.iter().filter(|r| (r.family, r.embed_dim, r.hidden) == (family, embed_dim, hidden)).collect();
            let mses: Vec<f64> = cell.iter().map(|r| r.test_mse).collect();
            let (mean_mse, std_mse) = mean_std(&mses);
            ApproxSummary {
                schema_version: SCHEMA_VERSION,
                family,
                embed_dim,
                hidden,
                params: cell[0].params,
                seeds: cell.len(),
                mean_mse,
                std_mse,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(family: CriticFamily, hidden: usize, seed: u64, mse: f64) -> ApproxRow {
        ApproxRow {
            schema_version: SCHEMA_VERSION,
            family,
            embed_dim: 4,
            hidden,
            params: 10,
            seed,
            val_mse: mse,
            test_mse: mse,
            parse_failure: 0.0,
        }
    }

    #[test]
    fn summary_groups_cells() {
        let rows = vec![
            row(CriticFamily::Disc, 8, 0, 0.1),
            row(CriticFamily::Disc, 8, 1, 0.3),
            row(CriticFamily::Gen, 8, 0, 0.2),
            row(CriticFamily::Gen, 8, 1, 0.2),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].mean_mse - 0.2).abs() < 1e-15);
        assert!((s[0].std_mse - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].std_mse, 0.0);
        assert_eq!(s[1].seeds, 2);
    }

    #[test]
    fn one_seed_is_rejected() {
        let spec = TaskSpec::default();
        let actor = SeqModel::zeros(5, 11, 2, 0);
        let sweep = ApproxSpec {
            families: vec![CriticFamily::Disc],
            capacities: vec![Capacity::new(2, 0)],
            n_seeds: 1,
            seed: 0,
        };
        assert!(approx_sweep(&actor, &spec, &sweep, &ProbeTraining::default()).is_err());
    }
}
