//! Critic-quality probes: value benchmarks, approximation sweeps, ranking,
//! distribution shift, the training-pipeline ablation grid, and the FLOP model.

pub mod ablation;
pub mod approx;
pub mod benchmark;
pub mod cost;
pub mod harness;
pub mod ood;
pub mod ranking;
pub mod report;

/// Version stamped into every probe table row and summary.
pub const SCHEMA_VERSION: u32 = 1;

pub use ablation::{ablation_grid, AblationRow};
pub use approx::{approx_sweep, summarize, ApproxRow, ApproxSpec, ApproxSummary};
pub use benchmark::{build_value_benchmark, BenchmarkSpec, Labeler, PromptPool};
pub use cost::{cost_model, measured_flops, CostEstimate, CostMethod, CostParams};
pub use harness::{frozen_actor, Capacity, CriticFamily, GenStage, ProbeTraining, DEFAULT_CAPACITIES};
pub use ood::{ood_probe, shift_ladder, OodRow, ShiftLevel};
pub use ranking::{ranking_probe, RankingRow, RankingSpec};
