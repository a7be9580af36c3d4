//! Scalar value critic with a sigmoid head, trained by mean squared error.

use std::path::Path;

use rand::Rng as _;

use crate::critic::vocab;
use crate::env::MdpState;
use crate::error::{Error, Result};
use crate::model::{Mlp, ModelKind, Optimizer, OptimizerKind};
use crate::rng::Rng;

/// Where a value label came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Full enumeration of continuations.
    #[default]
    Exact,
    /// Mean reward of this many sampled continuations.
    Mc(usize),
    /// The single observed return of the trajectory the state came from.
    Return,
}

/// A state with its regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledState {
    pub state: MdpState,
    pub value: f64,
    pub provenance: Provenance,
}

impl LabeledState {
    pub fn new(state: MdpState, value: f64, provenance: Provenance) -> Self {
        Self { state, value, provenance }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Reads the fixed-width state serialization. States are serialized with as many
/// response slots as prompt digits, so states of a longer task still parse; the
/// network then sees only its trained window.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminativeCritic {
    pub net: Mlp,
    pub horizon: usize,
}

impl DiscriminativeCritic {
    pub fn zeros(prompt_len: usize, horizon: usize, embed_dim: usize, hidden: usize) -> Self {
        let window = vocab::state_tokens_len(prompt_len, horizon);
        Self {
            net: Mlp::zeros(vocab::VOCAB, window, embed_dim, hidden, 1),
            horizon,
        }
    }

    /// Random features with a zero head, so the initial prediction is 0.5 everywhere.
    pub fn random(prompt_len: usize, horizon: usize, embed_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut c = Self::zeros(prompt_len, horizon, embed_dim, hidden);
        c.net.init_random(0.0, rng);
        c
    }

    pub fn param_count(&self) -> usize {
        self.net.params.len()
    }

    pub fn predict(&self, state: &MdpState) -> Result<f64> {
        let tokens = vocab::state_tokens(state, state.prompt.len())?;
        Ok(sigmoid(self.net.forward(&tokens).output[0]))
    }

    /// Adds `weight · ∇(v − target)²` to `grad` and returns the squared error.
    pub fn accumulate_mse_grad(&self, state: &MdpState, target: f64, weight: f64, grad: &mut [f64]) -> Result<f64> {
        let tokens = vocab::state_tokens(state, state.prompt.len())?;
        let act = self.net.forward(&tokens);
        let v = sigmoid(act.output[0]);
        let err = v - target;
        self.net.backward(&act, &[2.0 * err * v * (1.0 - v)], weight, grad);
        Ok(err * err)
    }

    pub fn mse(&self, data: &[LabeledState]) -> Result<f64> {
        let mut total = 0.0;
        for ex in data {
            total += (self.predict(&ex.state)? - ex.value).powi(2);
        }
        Ok(total / data.len().max(1) as f64)
    }

    /// One optimizer step on the mean squared error of `batch`; returns the batch MSE.
    pub fn mse_step(&mut self, batch: &[&LabeledState], opt: &mut Optimizer, lr: f64) -> Result<f64> {
        let mut grad = vec![0.0; self.param_count()];
        let w = 1.0 / batch.len().max(1) as f64;
        let mut total = 0.0;
        for ex in batch {
            total += self.accumulate_mse_grad(&ex.state, ex.value, w, &mut grad)?;
        }
        opt.step(&mut self.net.params, &grad, lr);
        Ok(total * w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.net.write_to(ModelKind::ValueHead, f)
    }

    pub fn load(path: &Path, prompt_len: usize, horizon: usize) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let net = Mlp::read_from(ModelKind::ValueHead, f)?;
        if net.window != vocab::state_tokens_len(prompt_len, horizon) || net.out_dim != 1 {
            return Err(Error::Checkpoint("value head does not match the task shape".into()));
        }
        Ok(Self { net, horizon })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscFitConfig {
    pub lr: f64,
    pub max_steps: usize,
    pub batch: usize,
    pub optimizer: OptimizerKind,
    /// Validation cadence in steps.
    pub eval_every: usize,
    /// Stop after this many evaluations without an improvement above `min_delta`.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for DiscFitConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            max_steps: 3000,
            batch: 32,
            optimizer: OptimizerKind::adam(),
            eval_every: 50,
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Batch MSE per step.
    pub train_curve: Vec<f64>,
    /// Validation MSE at each evaluation.
    pub val_curve: Vec<f64>,
    pub val_mse: f64,
    pub steps: usize,
}

/// Minibatch regression onto `train`, stopping once validation MSE saturates.
/// The parameters with the best validation MSE are kept.
pub fn disc_fit(
    critic: &mut DiscriminativeCritic,
    train: &[LabeledState],
    val: &[LabeledState],
    cfg: &DiscFitConfig,
    rng: &mut Rng,
) -> Result<FitReport> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let val = if val.is_empty() { train } else { val };
    let mut opt = Optimizer::new(cfg.optimizer, critic.param_count());
    let batch = cfg.batch.clamp(1, train.len());
    let mut report = FitReport {
        train_curve: Vec::new(),
        val_curve: Vec::new(),
        val_mse: critic.mse(val)?,
        steps: 0,
    };
    let mut best_params = critic.net.params.clone();
    let mut stale = 0;
    for step in 1..=cfg.max_steps {
        let picks: Vec<&LabeledState> = (0..batch).map(|_| &train[rng.random_range(0..train.len())]).collect();
        report.train_curve.push(critic.mse_step(&picks, &mut opt, cfg.lr)?);
        report.steps = step;
        if step % cfg.eval_every.max(1) == 0 {
            let m = critic.mse(val)?;
            report.val_curve.push(m);
            if m < report.val_mse - cfg.min_delta {
                stale = 0;
            } else {
                stale += 1;
            }
            if m < report.val_mse {
                report.val_mse = m;
                best_params.clone_from(&critic.net.params);
            }
            if stale >= cfg.patience {
                break;
            }
        }
    }
    critic.net.params = best_params;
    Ok(report)
}
