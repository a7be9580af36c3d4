//! Scripted trace synthesis and supervised fine-tuning of the generative critic.
//!
//! Target traces are `R_step, R_answer, R_flag, SCORE_k, EOT`: the step index, the
//! correct final token for the prompt, whether the most recent response token already
//! equals it, and the oracle value rounded to a score after Gaussian label noise.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::critic::generative::CriticContext;
use crate::critic::vocab::{self, EOT};
use crate::env::{MdpState, TaskSpec, Token};
use crate::error::{Error, Result};
use crate::model::{Optimizer, OptimizerKind, SeqModel};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SftExample {
    pub context: Vec<Token>,
    pub target: Vec<Token>,
}

/// Score index for an oracle value after additive `N(0, noise²)` label noise.
pub fn noisy_score(oracle_value: f64, noise: f64, rng: &mut Rng) -> usize {
    let eps = if noise > 0.0 {
        Normal::new(0.0, noise).expect("noise is positive").sample(rng)
    } else {
        0.0
    };
    (10.0 * (oracle_value + eps).clamp(0.0, 1.0)).round() as usize
}

/// Builds one supervised example for `state` with the given oracle value.
pub fn synthesize_sft_trace(
    state: &MdpState,
    spec: &TaskSpec,
    context: CriticContext,
    oracle_value: f64,
    noise: f64,
    reasoning: bool,
    rng: &mut Rng,
) -> SftExample {
    let mut target = Vec::with_capacity(5);
    if reasoning {
        let answer = spec.answer(&state.prompt);
        let on_track = state.partial.last() == Some(&answer);
        target.push(vocab::reason(state.step()));
        target.push(vocab::reason(answer));
        target.push(vocab::reason(on_track as usize));
    }
    target.push(vocab::score(noisy_score(oracle_value, noise, rng)));
    target.push(EOT);
    SftExample {
        context: context.tokens,
        target,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SftConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub optimizer: OptimizerKind,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            steps: 1500,
            batch: 32,
            optimizer: OptimizerKind::adam(),
        }
    }
}

/// Mean per-example negative log-likelihood of the targets.
pub fn sft_nll(model: &SeqModel, data: &[SftExample]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|ex| -model.sequence_logprob(&ex.context, &ex.target))
        .sum();
    total / data.len().max(1) as f64
}

/// Maximum-likelihood training on target traces; returns the per-step batch NLL.
pub fn sft_fit(model: &mut SeqModel, data: &[SftExample], cfg: &SftConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("SFT dataset is empty".into()));
    }
    let mut opt = Optimizer::new(cfg.optimizer, model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut curve = Vec::with_capacity(cfg.steps);
    let batch = cfg.batch.min(data.len()).max(1);
    for _ in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut nll = 0.0;
        for _ in 0..batch {
            let ex = &data[rng.random_range(0..data.len())];
            nll -= model.accumulate_sequence_grad(&ex.context, &ex.target, -1.0 / batch as f64, &mut grad);
        }
        curve.push(nll / batch as f64);
        opt.step(model.params_mut(), &grad, cfg.lr);
    }
    Ok(curve)
}

pub const SFT_HEADER: &str = "# genac-sft v1";

fn write_tokens<W: Write>(w: &mut W, tokens: &[Token]) -> std::io::Result<()> {
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            w.write_all(b" ")?;
        }
        write!(w, "{t}")?;
    }
    Ok(())
}

/// Writes one example per line: context tokens, a tab, then target tokens.
pub fn write_sft_dataset<W: Write>(mut w: W, data: &[SftExample]) -> Result<()> {
    writeln!(w, "{SFT_HEADER}")?;
    for ex in data {
        write_tokens(&mut w, &ex.context)?;
        w.write_all(b"\t")?;
        write_tokens(&mut w, &ex.target)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sft_dataset<R: BufRead>(r: R) -> Result<Vec<SftExample>> {
    let parse = |field: &str, line: usize| -> Result<Vec<Token>> {
        field
            .split_whitespace()
            .map(|t| {
                let tok: Token = t.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad token {t:?}"),
                })?;
                if tok >= vocab::VOCAB {
                    return Err(Error::Parse {
                        line,
                        msg: format!("token {tok} outside the critic vocabulary"),
                    });
                }
                Ok(tok)
            })
            .collect()
    };
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != SFT_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header {SFT_HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (ctx, tgt) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "missing tab separator".into(),
        })?;
        out.push(SftExample {
            context: parse(ctx, lineno)?,
            target: parse(tgt, lineno)?,
        });
    }
    Ok(out)
}

pub fn save_sft_dataset(path: &Path, data: &[SftExample]) -> Result<()> {
    write_sft_dataset(std::io::BufWriter::new(std::fs::File::create(path)?), data)
}

pub fn load_sft_dataset(path: &Path) -> Result<Vec<SftExample>> {
    read_sft_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}
