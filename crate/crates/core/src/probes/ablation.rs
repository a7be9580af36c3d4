//! Pipeline and ICC ablation: generative critics after each training stage,
//! with and without in-context conditioning.

use serde::{Deserialize, Serialize};

use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::model::SeqModel;
use crate::probes::harness::{fit_gen, gen_at, mean_std, score_mse, test_benchmark, Capacity, GenStage, ProbeTraining};
use crate::probes::SCHEMA_VERSION;
use crate::train::{par_map, GenConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub schema_version: u32,
    pub stage: GenStage,
    pub icc: bool,
    pub seeds: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub parse_failure: f64,
}

/// Test MSE after each stage for one seed. The `sft` and `rl` arms continue the
/// same critic, which is the same as training each arm from scratch with one seed.
fn stage_scores(
    actor: &SeqModel,
    spec: &TaskSpec,
    gen: &GenConfig,
    test: &[crate::critic::LabeledState],
    seed: u64,
    t: &ProbeTraining,
) -> Result<Vec<(GenStage, f64, f64)>> {
    let mut out = Vec::new();
    fit_gen(actor, spec, gen, GenStage::Rl, seed, t, |stage, fit| {
        let (mse, fail) = score_mse(&fit.estimator(gen.eval_decode), test, seed);
        out.push((stage, mse, fail));
        Ok(())
    })?;
    Ok(out)
}

/// The 3 × 2 grid of stage × ICC, each cell averaged over `n_seeds` critics
/// seeded `seed, seed + 1, ...`.
pub fn ablation_grid(
    actor: &SeqModel,
    spec: &TaskSpec,
    cap: Capacity,
    n_seeds: usize,
    seed: u64,
    t: &ProbeTraining,
) -> Result<Vec<AblationRow>> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    t.validate()?;
    let test = test_benchmark(actor, spec, t.gen.segment, t.test_states, seed)?;
    let inner = ProbeTraining { workers: 1, ..t.clone() };
    let cells: Vec<(bool, u64)> = [true, false]
        .into_iter()
        .flat_map(|icc| (0..n_seeds as u64).map(move |i| (icc, seed + i)))
        .collect();
    let scores = par_map(t.workers, cells.len(), |c| {
        let (icc, s) = cells[c];
        let gen = GenConfig {
            icc_enabled: icc,
            ..gen_at(&inner, cap)
        };
        stage_scores(actor, spec, &gen, &test, s, &inner)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for stage in GenStage::ALL {
        for icc in [true, false] {
            let (mses, fails): (Vec<f64>, Vec<f64>) = cells
                .iter()
                .zip(&scores)
                .filter(|((c_icc, _), _)| *c_icc == icc)
                .filter_map(|(_, per)| per.iter().find(|(st, _, _)| *st == stage).map(|&(_, m, f)| (m, f)))
                .unzip();
            let (mean_mse, std_mse) = mean_std(&mses);
            rows.push(AblationRow {
                schema_version: SCHEMA_VERSION,
                stage,
                icc,
                seeds: mses.len(),
                mean_mse,
                std_mse,
                parse_failure: fails.iter().sum::<f64>() / fails.len().max(1) as f64,
            });
        }
    }
    Ok(rows)
}
