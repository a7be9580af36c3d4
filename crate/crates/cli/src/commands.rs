//! Subcommand implementations.

use std::path::Path;

use serde::Serialize;

use genac_core::critic::{
    DiscriminativeCritic, GenerativeCritic, GenerativeEstimator, OracleEstimator, RandomEstimator,
    ValueEstimator,
};
use genac_core::probes::ood::ladder_actors;
use genac_core::probes::report::{cost_table, write_csv, write_summary};
use genac_core::probes::{
    ablation_grid, approx_sweep, frozen_actor, ood_probe, ranking_probe, shift_ladder, summarize, ApproxSpec,
    PromptPool, RankingSpec,
};
use genac_core::train::{
    actor_success_rate, actor_window, build_actor, evaluate, pretrain_disc_critic, pretrain_gen_critic, run_genac_pipeline,
    run_grpo, run_rloo, run_sft, run_vcppo_pipeline, IterationMetrics,
};
use genac_core::SeqModel;

use crate::config::{Algorithm, RankCritic, RunConfig};
use crate::error::CliError;
use crate::run::{MetricsLog, RunDir};

pub const ACTOR_CKPT: &str = "actor.bin";
pub const FROZEN_ACTOR_CKPT: &str = "frozen_actor.bin";
pub const DISC_CKPT: &str = "disc_critic.bin";
pub const GEN_SFT_CKPT: &str = "gen_critic_sft.bin";
pub const GEN_CKPT: &str = "gen_critic.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Sft,
    Rl,
    Disc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ProbeKind {
    Approx,
    Rank,
    Ood,
    Ablation,
    Cost,
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(format!("{} does not exist", path.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    schema_version: u32,
    algorithm: &'a str,
    seed: u64,
    iteration: usize,
    cumulative_flops: f64,
    eval_success: f64,
}

/// Success curve in `(iteration, FLOPs, avg@k)` form, one row per evaluation.
fn write_curve(run: &RunDir, cfg: &RunConfig, initial: f64, metrics: &[IterationMetrics]) -> Result<(), CliError> {
    let algorithm = cfg.algorithm.name();
    let mut rows = vec![CurveRow {
        schema_version: 1,
        algorithm,
        seed: cfg.seed,
        iteration: 0,
        cumulative_flops: 0.0,
        eval_success: initial,
    }];
    rows.extend(metrics.iter().filter_map(|m| {
        m.eval_success.map(|e| CurveRow {
            schema_version: 1,
            algorithm,
            seed: cfg.seed,
            iteration: m.iteration + 1,
            cumulative_flops: m.cumulative_flops,
            eval_success: e,
        })
    }));
    write_csv(&run.file("curve.csv"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    schema_version: u32,
    algorithm: String,
    seed: u64,
    iterations: usize,
    initial_eval: f64,
    final_eval: Option<f64>,
    post_sft_parse_failure: Option<f64>,
    pretrain_val_mse: Option<f64>,
}

pub fn cmd_train(cfg: &RunConfig, run: &RunDir, hash: &str) -> Result<(), CliError> {
    let ppo = cfg.ppo();
    let actor = build_actor(&cfg.task, &cfg.actor, cfg.seed);
    let mut log = MetricsLog::create(run, hash, cfg.algorithm.name(), cfg.seed)?;
    let mut summary = TrainSummary {
        schema_version: 1,
        algorithm: cfg.algorithm.name().into(),
        seed: cfg.seed,
        iterations: ppo.iterations,
        initial_eval: 0.0,
        final_eval: None,
        post_sft_parse_failure: None,
        pretrain_val_mse: None,
    };
    let train = match cfg.algorithm {
        Algorithm::Grpo => run_grpo(&cfg.task, &ppo, actor, &mut log)?,
        Algorithm::Rloo => run_rloo(&cfg.task, &ppo, actor, &mut log)?,
        Algorithm::Vcppo => {
            let out = run_vcppo_pipeline(&cfg.task, &ppo, &cfg.disc_or_default(), actor, &mut log)?;
            summary.pretrain_val_mse = Some(out.pretrain.fit.val_mse);
            out.output.critic.save(&run.checkpoint(DISC_CKPT))?;
            out.output.train
        }
        Algorithm::Genac => {
            let out = run_genac_pipeline(&cfg.task, &ppo, &cfg.gen_or_default(), actor, &mut log)?;
            summary.post_sft_parse_failure = Some(out.sft.held_out_parse_failure);
            summary.pretrain_val_mse = Some(out.rl.val_mse);
            out.output.critic.save(&run.checkpoint(GEN_CKPT))?;
            out.output.train
        }
    };
    train.actor.save(&run.checkpoint(ACTOR_CKPT))?;
    summary.initial_eval = train.initial_eval;
    summary.final_eval = train.metrics.iter().rev().find_map(|m| m.eval_success);
    write_curve(run, cfg, train.initial_eval, &train.metrics)?;
    write_json(&run.file("train.json"), &summary)
}

/// The frozen actor shared by `pretrain` and `probe`: loaded from the run if
/// present, otherwise built, warm-started and saved.
fn frozen(cfg: &RunConfig, run: &RunDir) -> Result<SeqModel, CliError> {
    let path = run.checkpoint(FROZEN_ACTOR_CKPT);
    if path.exists() {
        let actor = SeqModel::load(&path)?;
        check_actor(cfg, &actor, &path)?;
        return Ok(actor);
    }
    let actor = frozen_actor(&cfg.task, &cfg.actor, cfg.probe.warm_iterations, cfg.seed)?;
    actor.save(&path)?;
    Ok(actor)
}

fn check_actor(cfg: &RunConfig, actor: &SeqModel, path: &Path) -> Result<(), CliError> {
    let (vocab, window) = (cfg.task.modulus, actor_window(&cfg.task));
    if actor.vocab() != vocab || actor.net.window != window {
        return Err(CliError::Runtime(format!(
            "{}: actor has vocabulary {} and window {}, the task needs {vocab} and {window}",
            path.display(),
            actor.vocab(),
            actor.net.window
        )));
    }
    Ok(())
}

fn load_gen(cfg: &RunConfig, run: &RunDir, actor: &SeqModel, name: &str) -> Result<GenerativeCritic, CliError> {
    let path = run.checkpoint(name);
    require(&path)?;
    let shape = cfg.gen_or_default().shape(&cfg.task, actor.param_count());
    GenerativeCritic::load(&path, shape).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_disc(cfg: &RunConfig, run: &RunDir) -> Result<DiscriminativeCritic, CliError> {
    let path = run.checkpoint(DISC_CKPT);
    require(&path)?;
    DiscriminativeCritic::load(&path, cfg.task.prompt_len, cfg.task.horizon())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct DiscCurveRow {
    schema_version: u32,
    eval: usize,
    step: usize,
    val_mse: f64,
}

pub fn cmd_pretrain(cfg: &RunConfig, run: &RunDir, stage: Stage) -> Result<(), CliError> {
    let optimizer = cfg.ppo.optimizer;
    match stage {
        Stage::Sft => {
            let actor = frozen(cfg, run)?;
            let gen = cfg.gen_or_default();
            let mut critic = gen.build_critic(&cfg.task, actor.param_count(), cfg.seed);
            let report = run_sft(&mut critic, &actor, &cfg.task, &gen, optimizer, cfg.seed)?;
            critic.save(&run.checkpoint(GEN_SFT_CKPT))?;
            write_json(
                &run.file("pretrain_sft.json"),
                &serde_json::json!({
                    "schema_version": 1,
                    "stage": "sft",
                    "examples": gen.sft_prompts,
                    "held_out_parse_failure": report.held_out_parse_failure,
                    "val_mse": report.val_mse,
                    "hint": report.hint,
                    "nll_curve": report.nll_curve,
                }),
            )
        }
        Stage::Rl => {
            let sft_path = run.checkpoint(GEN_SFT_CKPT);
            require(&sft_path)?;
            let actor = frozen(cfg, run)?;
            let gen = cfg.gen_or_default();
            let mut critic = load_gen(cfg, run, &actor, GEN_SFT_CKPT)?;
            let report = pretrain_gen_critic(&mut critic, &actor, &cfg.task, &gen, optimizer, cfg.seed, cfg.workers)?;
            critic.save(&run.checkpoint(GEN_CKPT))?;
            write_json(
                &run.file("pretrain_rl.json"),
                &serde_json::json!({
                    "schema_version": 1,
                    "stage": "rl",
                    "iterations": report.iterations,
                    "val_mse": report.val_mse,
                    "parse_failure": report.parse_failure,
                    "hint": report.hint,
                    "rv_curve": report.rv_curve,
                    "val_curve": report.val_curve,
                }),
            )
        }
        Stage::Disc => {
            let actor = frozen(cfg, run)?;
            let disc = cfg.disc_or_default();
            let (critic, report) = pretrain_disc_critic(&actor, &cfg.task, &disc, optimizer, cfg.seed)?;
            critic.save(&run.checkpoint(DISC_CKPT))?;
            let rows: Vec<DiscCurveRow> = report
                .fit
                .val_curve
                .iter()
                .enumerate()
                .map(|(i, &v)| DiscCurveRow {
                    schema_version: 1,
                    eval: i,
                    step: (i + 1) * disc.eval_every,
                    val_mse: v,
                })
                .collect();
            write_csv(&run.file("pretrain_disc_curve.csv"), &rows)?;
            write_json(
                &run.file("pretrain_disc.json"),
                &serde_json::json!({
                    "schema_version": 1,
                    "stage": "disc",
                    "train_states": report.train_states,
                    "steps": report.fit.steps,
                    "val_mse": report.fit.val_mse,
                    "train_curve": report.fit.train_curve,
                    "val_curve": report.fit.val_curve,
                }),
            )
        }
    }
}

#[derive(Serialize)]
struct RankTableRow {
    schema_version: u32,
    critic: &'static str,
    pool_size: usize,
    prompts: usize,
    top1_accuracy: f64,
    std_error: f64,
    critic_tie_rate: f64,
    oracle_tie_rate: f64,
}

fn rank_name(c: RankCritic) -> &'static str {
    match c {
        RankCritic::Oracle => "oracle",
        RankCritic::Random => "random",
        RankCritic::Disc => "disc",
        RankCritic::Gen => "gen",
    }
}

pub fn cmd_probe(cfg: &RunConfig, run: &RunDir, probe: ProbeKind) -> Result<(), CliError> {
    let p = &cfg.probe;
    match probe {
        ProbeKind::Cost => {
            let rows = cost_table(&p.cost)?;
            write_csv(&run.probe("cost.csv"), &rows)?;
            write_summary(&run.probe("cost.json"), "cost", &rows)?;
        }
        ProbeKind::Approx => {
            let actor = frozen(cfg, run)?;
            let sweep = ApproxSpec {
                families: p.families.clone(),
                capacities: p.capacities.clone(),
                n_seeds: p.n_seeds,
                seed: cfg.seed,
            };
            let rows = approx_sweep(&actor, &cfg.task, &sweep, &cfg.probe_training())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let summary = summarize(&rows);
            write_csv(&run.probe("approx.csv"), &rows)?;
            write_csv(&run.probe("approx_summary.csv"), &summary)?;
            write_summary(
                &run.probe("approx.json"),
                "approx",
                &serde_json::json!({ "cells": rows, "summary": summary }),
            )?;
        }
        ProbeKind::Rank => {
            let actor = frozen(cfg, run)?;
            let disc = if p.rank_critics.contains(&RankCritic::Disc) { Some(load_disc(cfg, run)?) } else { None };
            let gen = if p.rank_critics.contains(&RankCritic::Gen) { Some(load_gen(cfg, run, &actor, GEN_CKPT)?) } else { None };
            let hint = actor_success_rate(&actor, &cfg.task, cfg.seed);
            let spec = RankingSpec {
                n_prompts: p.rank_prompts,
                rule: cfg.gen_or_default().segment,
                pool: PromptPool::HeldOut,
                seed: cfg.seed,
            };
            let oracle = OracleEstimator { policy: &actor, spec: &cfg.task };
            let gen_est = gen.as_ref().map(|g| GenerativeEstimator::new(g, hint, p.decode));
            let mut rows = Vec::new();
            for &which in &p.rank_critics {
                let est: &dyn ValueEstimator = match which {
                    RankCritic::Oracle => &oracle,
                    RankCritic::Random => &RandomEstimator,
                    RankCritic::Disc => disc.as_ref().expect("loaded when requested"),
                    RankCritic::Gen => gen_est.as_ref().expect("loaded when requested"),
                };
                for r in ranking_probe(est, &actor, &cfg.task, &p.pool_sizes, &spec)? {
                    rows.push(RankTableRow {
                        schema_version: r.schema_version,
                        critic: rank_name(which),
                        pool_size: r.pool_size,
                        prompts: r.prompts,
                        top1_accuracy: r.top1_accuracy,
                        std_error: r.std_error,
                        critic_tie_rate: r.critic_tie_rate,
                        oracle_tie_rate: r.oracle_tie_rate,
                    });
                }
            }
            write_csv(&run.probe("rank.csv"), &rows)?;
            write_summary(&run.probe("rank.json"), "rank", &rows)?;
        }
        ProbeKind::Ood => {
            let actor = frozen(cfg, run)?;
            let disc = load_disc(cfg, run)?;
            let gen = load_gen(cfg, run, &actor, GEN_CKPT)?;
            let ladder = shift_ladder(&cfg.task)?;
            let actors = ladder_actors(&actor, &ladder, &cfg.actor, p.warm_iterations, cfg.seed)?;
            let rows = ood_probe(&disc, &gen, &ladder, &actors, cfg.gen_or_default().segment, p.ood_states, cfg.seed)?;
            write_csv(&run.probe("ood.csv"), &rows)?;
            write_summary(&run.probe("ood.json"), "ood", &serde_json::json!({ "ladder": ladder, "rows": rows }))?;
        }
        ProbeKind::Ablation => {
            let actor = frozen(cfg, run)?;
            let rows = ablation_grid(&actor, &cfg.task, p.ablation_capacity, p.ablation_seeds, cfg.seed, &cfg.probe_training())?;
            write_csv(&run.probe("ablation.csv"), &rows)?;
            write_summary(&run.probe("ablation.json"), "ablation", &rows)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub checkpoint: String,
    pub prompts: usize,
    pub samples: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub std_error: f64,
}

/// avg@16 over evaluation prompts.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport, CliError> {
    require(checkpoint)?;
    let actor = SeqModel::load(checkpoint).map_err(|e| CliError::Runtime(format!("{}: {e}", checkpoint.display())))?;
    check_actor(cfg, &actor, checkpoint)?;
    let samples = 16;
    let prompts = cfg.ppo.eval_prompts;
    let rate = evaluate(&actor, &cfg.task, prompts, samples, cfg.seed, cfg.workers);
    let n = (prompts * samples) as f64;
    Ok(EvalReport {
        schema_version: 1,
        checkpoint: checkpoint.display().to_string(),
        prompts,
        samples,
        seed: cfg.seed,
        success_rate: rate,
        std_error: (rate * (1.0 - rate) / n).sqrt(),
    })
}
