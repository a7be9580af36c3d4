//! Run configuration: TOML in, canonical hash out.
//!
//! Every section rejects unknown keys. The hash is the SHA-256 of the parsed
//! config serialized as JSON with object keys sorted, so it does not depend on
//! key order or formatting in the file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use genac_core::critic::DecodeMode;
use genac_core::probes::{Capacity, CostParams, CriticFamily, ProbeTraining, DEFAULT_CAPACITIES};
use genac_core::train::{ActorConfig, DiscConfig, GenConfig, PpoConfig};
use genac_core::TaskSpec;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Grpo,
    Rloo,
    Vcppo,
    Genac,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Grpo => "grpo",
            Algorithm::Rloo => "rloo",
            Algorithm::Vcppo => "vcppo",
            Algorithm::Genac => "genac",
        }
    }
}

/// Which estimators the ranking probe scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCritic {
    Oracle,
    Random,
    Disc,
    Gen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    /// GRPO iterations applied to the initial actor to get the frozen actor
    /// used by `pretrain` and `probe`.
    pub warm_iterations: usize,
    pub families: Vec<CriticFamily>,
    pub capacities: Vec<Capacity>,
    pub n_seeds: usize,
    pub disc_lrs: Vec<f64>,
    pub test_states: usize,
    pub rank_prompts: usize,
    pub pool_sizes: Vec<usize>,
    pub rank_critics: Vec<RankCritic>,
    pub ood_states: usize,
    pub ablation_seeds: usize,
    pub ablation_capacity: Capacity,
    pub decode: DecodeMode,
    pub cost: CostParams,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            warm_iterations: 20,
            families: vec![CriticFamily::Disc, CriticFamily::Gen],
            capacities: DEFAULT_CAPACITIES.to_vec(),
            n_seeds: 5,
            disc_lrs: ProbeTraining::default().disc_lrs,
            test_states: 256,
            rank_prompts: 2000,
            pool_sizes: vec![2, 4, 8],
            rank_critics: vec![RankCritic::Oracle, RankCritic::Random, RankCritic::Disc, RankCritic::Gen],
            ood_states: 100,
            ablation_seeds: 3,
            ablation_capacity: Capacity::new(8, 32),
            decode: DecodeMode::Greedy,
            cost: CostParams::reference(1e9, 1e6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub task: TaskSpec,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub actor: ActorConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    /// Required for `vcppo` and for the `disc` pretraining stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc: Option<DiscConfig>,
    /// Required for `genac` and for the `sft` and `rl` pretraining stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenConfig>,
    #[serde(default)]
    pub probe: ProbeSettings,
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("serializing config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| CliError::Config(m);
        self.task.validate().map_err(|e| cfg(e.to_string()))?;
        self.ppo.validate().map_err(|e| cfg(e.to_string()))?;
        if self.workers == 0 {
            return Err(cfg("workers must be >= 1".into()));
        }
        match self.algorithm {
            Algorithm::Vcppo if self.disc.is_none() => return Err(cfg("algorithm \"vcppo\" needs a [disc] section".into())),
            Algorithm::Genac if self.gen.is_none() => return Err(cfg("algorithm \"genac\" needs a [gen] section".into())),
            _ => {}
        }
        if let Some(g) = &self.gen {
            if !(0.0..1.0).contains(&g.momentum) {
                return Err(cfg(format!("gen.momentum must lie in [0, 1), got {}", g.momentum)));
            }
            if g.max_trace_len == 0 {
                return Err(cfg("gen.max_trace_len must be >= 1".into()));
            }
        }
        let p = &self.probe;
        if p.pool_sizes.iter().any(|&k| k < 2) {
            return Err(cfg("probe.pool_sizes entries must be >= 2".into()));
        }
        if p.capacities.is_empty() || p.families.is_empty() {
            return Err(cfg("probe.capacities and probe.families must be non-empty".into()));
        }
        Ok(())
    }

    /// PPO settings with the run seed and worker count applied.
    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            seed: self.seed,
            workers: self.workers,
            ..self.ppo.clone()
        }
    }

    pub fn disc_or_default(&self) -> DiscConfig {
        self.disc.clone().unwrap_or_default()
    }

    pub fn gen_or_default(&self) -> GenConfig {
        self.gen.clone().unwrap_or_default()
    }

    pub fn probe_training(&self) -> ProbeTraining {
        ProbeTraining {
            disc: self.disc_or_default(),
            gen: GenConfig {
                eval_decode: self.probe.decode,
                ..self.gen_or_default()
            },
            disc_lrs: self.probe.disc_lrs.clone(),
            optimizer: self.ppo.optimizer,
            test_states: self.probe.test_states,
            workers: self.workers,
        }
    }

    /// Hex SHA-256 of the canonical JSON form. `workers` is left out since it
    /// does not change results.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut value = serde_json::to_value(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Some(map) = value.as_object_mut() {
            map.remove("workers");
        }
        let canon = canonical_json(&value);
        Ok(hex::encode(Sha256::digest(canon.as_bytes())))
    }
}

/// JSON text with object keys sorted at every level and no whitespace.
pub fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
algorithm = "grpo"

[task]
modulus = 5
prompt_len = 6
digit_dist = [0.5, 0.5, 0.0, 0.0, 0.0]
seed = 0
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.ppo, PpoConfig::default());
        assert_eq!(c.ppo().seed, 3);
        assert!(c.gen.is_none());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: serde_json::Value = serde_json::from_str(r#"{"b": [1, {"z": 1, "a": 2}], "a": "x"}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":"x","b":[1,{"a":2,"z":1}]}"#);
    }

    #[test]
    fn algorithm_sections_are_required() {
        let text = MINIMAL.replace("\"grpo\"", "\"genac\"");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(m)) if m.contains("[gen]")));
        let ok = format!("{text}\n[gen]\nsft_noise = 0.2\n");
        assert_eq!(RunConfig::parse(&ok).unwrap().gen.unwrap().sft_noise, 0.2);
    }

    #[test]
    fn hash_ignores_workers() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig { workers: 4, ..a.clone() };
        let c = RunConfig { seed: 4, ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = format!("{MINIMAL}\n[ppo]\nclip_epsilon = 0.3\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("clip_epsilon"), "{err}");
        assert!(err.contains("line"), "{err}");
    }
}
