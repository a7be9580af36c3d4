//! End-to-end runs: critic pretraining against the initial actor, then joint training.

use crate::env::TaskSpec;
use crate::error::Result;
use crate::model::SeqModel;

use super::loops::{run_genac, run_vcppo, GenacOutput, VcppoOutput};
use super::pretrain::{pretrain_disc_critic, pretrain_gen_critic, run_sft, DiscPretrainReport, GenPretrainReport, SftReport};
use super::{DiscConfig, GenConfig, PpoConfig, TrainObserver};

pub struct GenacPipeline {
    pub sft: SftReport,
    pub rl: GenPretrainReport,
    pub output: GenacOutput,
}

/// SFT, then REINFORCE pretraining against the frozen initial actor, then the joint loop.
pub fn run_genac_pipeline(
    spec: &TaskSpec,
    cfg: &PpoConfig,
    gen: &GenConfig,
    actor: SeqModel,
    observer: &mut dyn TrainObserver,
) -> Result<GenacPipeline> {
    let mut critic = gen.build_critic(spec, actor.param_count(), cfg.seed);
    let sft = run_sft(&mut critic, &actor, spec, gen, cfg.optimizer, cfg.seed)?;
    let rl = pretrain_gen_critic(&mut critic, &actor, spec, gen, cfg.optimizer, cfg.seed, cfg.workers)?;
    let output = run_genac(spec, cfg, gen, actor, critic, observer)?;
    Ok(GenacPipeline { sft, rl, output })
}

pub struct VcppoPipeline {
    pub pretrain: DiscPretrainReport,
    pub output: VcppoOutput,
}

/// Value pretraining against the frozen initial actor, then PPO.
pub fn run_vcppo_pipeline(
    spec: &TaskSpec,
    cfg: &PpoConfig,
    disc: &DiscConfig,
    actor: SeqModel,
    observer: &mut dyn TrainObserver,
) -> Result<VcppoPipeline> {
    let (critic, pretrain) = pretrain_disc_critic(&actor, spec, disc, cfg.optimizer, cfg.seed)?;
    let output = run_vcppo(spec, cfg, actor, critic, observer)?;
    Ok(VcppoPipeline { pretrain, output })
}
