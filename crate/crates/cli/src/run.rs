//! Run directories and line-oriented logs.
//!
//! Layout: `<out>/<run-id>/{config.snapshot, metrics.jsonl, timing.jsonl, checkpoints/, probes/}`.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use genac_core::train::{IterationMetrics, TrainObserver};

use crate::config::RunConfig;
use crate::error::CliError;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// `<UTC timestamp>-<first 12 hex digits of the config hash>`.
pub fn default_run_id(config_hash: &str) -> String {
    let ts = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    format!("{ts}-{}", &config_hash[..12.min(config_hash.len())])
}

#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub run_id: String,
}

impl RunDir {
    /// Creates the directory tree if needed. Existing artifacts are kept, so
    /// `pretrain` and `probe` can share one run.
    pub fn create(out_root: &Path, run_id: &str) -> Result<Self, CliError> {
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(CliError::Config(format!("invalid run id {run_id:?}")));
        }
        let path = out_root.join(run_id);
        for sub in ["checkpoints", "probes"] {
            fs::create_dir_all(path.join(sub))
                .map_err(|e| CliError::Runtime(format!("creating {}: {e}", path.join(sub).display())))?;
        }
        Ok(Self {
            path,
            run_id: run_id.to_string(),
        })
    }

    pub fn snapshot(&self) -> PathBuf {
        self.path.join("config.snapshot")
    }

    pub fn metrics(&self) -> PathBuf {
        self.path.join("metrics.jsonl")
    }

    pub fn timing(&self) -> PathBuf {
        self.path.join("timing.jsonl")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.path.join("checkpoints").join(name)
    }

    pub fn probe(&self, name: &str) -> PathBuf {
        self.path.join("probes").join(name)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes the effective config as TOML, preceded by a comment with its hash.
    pub fn write_snapshot(&self, cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
        let body = cfg.to_toml()?;
        fs::write(self.snapshot(), format!("# config hash: {hash}\n{body}"))?;
        Ok(())
    }
}

/// Append-only JSON Lines file. Each record is written with one `write_all`
/// and flushed, so the file is valid up to the last complete line.
pub struct JsonlWriter {
    file: File,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| CliError::Runtime(format!("opening {}: {e}", path.display())))?;
        Ok(Self { file })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}

/// One metrics line: the trainer's record plus run identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub config_hash: String,
    pub algorithm: String,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: IterationMetrics,
}

#[derive(Serialize)]
struct TimingRecord {
    schema_version: u32,
    iteration: usize,
    seconds: f64,
    elapsed: f64,
}

/// Streams metrics and wall-clock timings to the run directory.
pub struct MetricsLog {
    metrics: JsonlWriter,
    timing: JsonlWriter,
    run_id: String,
    config_hash: String,
    algorithm: String,
    seed: u64,
    start: Instant,
    last: Instant,
    pub records: Vec<IterationMetrics>,
}

impl MetricsLog {
    pub fn create(run: &RunDir, config_hash: &str, algorithm: &str, seed: u64) -> Result<Self, CliError> {
        let now = Instant::now();
        Ok(Self {
            metrics: JsonlWriter::create(&run.metrics())?,
            timing: JsonlWriter::create(&run.timing())?,
            run_id: run.run_id.clone(),
            config_hash: config_hash.to_string(),
            algorithm: algorithm.to_string(),
            seed,
            start: now,
            last: now,
            records: Vec::new(),
        })
    }
}

impl TrainObserver for MetricsLog {
    fn on_iteration(&mut self, m: &IterationMetrics) -> genac_core::Result<()> {
        let rec = MetricsRecord {
            schema_version: METRICS_SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            config_hash: self.config_hash.clone(),
            algorithm: self.algorithm.clone(),
            seed: self.seed,
            metrics: m.clone(),
        };
        self.metrics.append(&rec)?;
        let now = Instant::now();
        self.timing.append(&TimingRecord {
            schema_version: METRICS_SCHEMA_VERSION,
            iteration: m.iteration,
            seconds: (now - self.last).as_secs_f64(),
            elapsed: (now - self.start).as_secs_f64(),
        })?;
        self.last = now;
        self.records.push(m.clone());
        Ok(())
    }
}

/// Parses every complete line of a metrics file.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize) -> IterationMetrics {
        IterationMetrics {
            iteration: i,
            mean_reward: 0.25,
            actor_loss: -0.5,
            critic_loss: None,
            critic_mean_rv: Some(0.75),
            parse_failure_rate: None,
            icc_hint: None,
            eval_success: if i.is_multiple_of(2) { Some(0.5) } else { None },
            actor_tokens: 3072,
            critic_gen_tokens: 0,
            flops: 1.0e6,
            cumulative_flops: 1.0e6 * (i + 1) as f64,
        }
    }

    #[test]
    fn metrics_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path(), "r1").unwrap();
        let mut log = MetricsLog::create(&run, "abc", "grpo", 7).unwrap();
        for i in 0..3 {
            log.on_iteration(&sample(i)).unwrap();
        }
        let back = read_metrics(&run.metrics()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].metrics, sample(1));
        assert_eq!(back[2].run_id, "r1");
        assert_eq!(back[0].schema_version, METRICS_SCHEMA_VERSION);
    }

    #[test]
    fn run_ids_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        assert!(RunDir::create(dir.path(), "../x").is_err());
        assert!(RunDir::create(dir.path(), "").is_err());
        assert!(default_run_id("0123456789abcdef").ends_with("-0123456789ab"));
    }
}
