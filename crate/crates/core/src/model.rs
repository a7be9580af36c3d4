//! Autoregressive categorical sequence models with analytic gradients.
//!
//! Both the actor and the critics share one network family:
//!
//! ```text
//! slots    = last k context tokens, newest first, padded with PAD
//! features = [E[slot_0], ..., E[slot_{k-1}], pe(len(context))]   // (k+1)·d
//! hidden   = tanh(W1 · features + b1)                            // width h, skipped when h = 0
//! output   = W2 · hidden + b2
//! ```
//!
//! `E` is a `(V+1) × d` embedding table (row `V` is PAD) and `pe` is a fixed
//! sinusoidal encoding of the context length. With `F = (k+1)·d` and
//! `H = h` if `h > 0` else `F`, the parameter count is
//!
//! ```text
//! P = (V+1)·d + [h > 0]·(h·F + h) + O·H + O
//! ```
//!
//! where `O` is the output width (`V` for a [`SeqModel`], 1 for a value head).

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Policy, Token};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Dense gradient aligned with a parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn add_scaled(&mut self, other: &GradientVector, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

/// Sinusoidal encoding of `pos` into `dim` values.
pub fn position_encoding(pos: usize, dim: usize, out: &mut [f64]) {
    for i in 0..dim {
        let pair = (i / 2) as f64;
        let freq = 10_000f64.powf(-2.0 * pair / dim.max(1) as f64);
        let angle = pos as f64 * freq;
        out[i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct Activations {
    slots: Vec<usize>,
    features: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// The shared network: token-window embeddings, optional tanh layer, linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub in_vocab: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(in_vocab: usize, window: usize, embed_dim: usize, hidden: usize, out_dim: usize) -> usize {
        let feat = (window + 1) * embed_dim;
        let head_in = if hidden > 0 { hidden } else { feat };
        let layer1 = if hidden > 0 { hidden * feat + hidden } else { 0 };
        (in_vocab + 1) * embed_dim + layer1 + out_dim * head_in + out_dim
    }

    pub fn zeros(in_vocab: usize, window: usize, embed_dim: usize, hidden: usize, out_dim: usize) -> Self {
        let n = Self::param_count(in_vocab, window, embed_dim, hidden, out_dim);
        Self {
            in_vocab,
            window,
            embed_dim,
            hidden,
            out_dim,
            params: vec![0.0; n],
        }
    }

    /// Gaussian init: unit-variance embeddings, fan-in scaled layers, zero biases.
    /// `out_scale` multiplies the head's standard deviation.
    pub fn init_random(&mut self, out_scale: f64, rng: &mut Rng) {
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        let feat = self.feature_dim() as f64;
        let head_in = self.head_in() as f64;
        let (emb, w1, b1, w2, b2) = self.offsets();
        for i in emb..w1 {
            self.params[i] = std_normal.sample(rng);
        }
        for i in w1..b1 {
            self.params[i] = std_normal.sample(rng) / feat.sqrt();
        }
        for i in b1..w2 {
            self.params[i] = 0.0;
        }
        for i in w2..b2 {
            self.params[i] = out_scale * std_normal.sample(rng) / head_in.sqrt();
        }
        for i in b2..self.params.len() {
            self.params[i] = 0.0;
        }
    }

    pub fn pad(&self) -> usize {
        self.in_vocab
    }

    pub fn feature_dim(&self) -> usize {
        (self.window + 1) * self.embed_dim
    }

    fn head_in(&self) -> usize {
        if self.hidden > 0 {
            self.hidden
        } else {
            self.feature_dim()
        }
    }

    /// Start offsets of (E, W1, b1, W2, b2).
    fn offsets(&self) -> (usize, usize, usize, usize, usize) {
        let emb = 0;
        let w1 = emb + (self.in_vocab + 1) * self.embed_dim;
        let b1 = w1 + if self.hidden > 0 { self.hidden * self.feature_dim() } else { 0 };
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.out_dim * self.head_in();
        (emb, w1, b1, w2, b2)
    }

    pub fn check_context(&self, ctx: &[Token]) -> Result<()> {
        match ctx.iter().find(|&&t| t >= self.in_vocab) {
            Some(&token) => Err(Error::TokenOutOfRange {
                token,
                vocab: self.in_vocab,
            }),
            None => Ok(()),
        }
    }

    pub fn forward(&self, ctx: &[Token]) -> Activations {
        let d = self.embed_dim;
        let k = self.window;
        let feat_dim = self.feature_dim();
        let (emb, w1, b1, w2, b2) = self.offsets();
        let p = &self.params;

        let slots: Vec<usize> = (0..k)
            .map(|j| if j < ctx.len() { ctx[ctx.len() - 1 - j] } else { self.pad() })
            .collect();
        let mut features = vec![0.0; feat_dim];
        for (j, &tok) in slots.iter().enumerate() {
            features[j * d..(j + 1) * d].copy_from_slice(&p[emb + tok * d..emb + (tok + 1) * d]);
        }
        position_encoding(ctx.len(), d, &mut features[k * d..]);

        let hidden: Vec<f64> = if self.hidden > 0 {
            (0..self.hidden)
                .map(|i| {
                    let row = &p[w1 + i * feat_dim..w1 + (i + 1) * feat_dim];
                    let z: f64 = p[b1 + i] + dot(row, &features);
                    z.tanh()
                })
                .collect()
        } else {
            Vec::new()
        };
        let head_input: &[f64] = if self.hidden > 0 { &hidden } else { &features };
        let head_in = head_input.len();
        let output = (0..self.out_dim)
            .map(|o| p[b2 + o] + dot(&p[w2 + o * head_in..w2 + (o + 1) * head_in], head_input))
            .collect();
        Activations {
            slots,
            features,
            hidden,
            output,
        }
    }

    /// Accumulates `weight · ∂(dout · output)/∂params` into `grad`.
    pub fn backward(&self, act: &Activations, dout: &[f64], weight: f64, grad: &mut [f64]) {
        let d = self.embed_dim;
        let feat_dim = self.feature_dim();
        let (emb, w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let head_input: &[f64] = if self.hidden > 0 { &act.hidden } else { &act.features };
        let head_in = head_input.len();

        let mut dhead = vec![0.0; head_in];
        for o in 0..self.out_dim {
            let g = weight * dout[o];
            if g == 0.0 {
                continue;
            }
            grad[b2 + o] += g;
            let row = w2 + o * head_in;
            for i in 0..head_in {
                grad[row + i] += g * head_input[i];
                dhead[i] += g * p[row + i];
            }
        }

        let dfeat = if self.hidden > 0 {
            let mut dfeat = vec![0.0; feat_dim];
            for i in 0..self.hidden {
                let a = act.hidden[i];
                let dz = dhead[i] * (1.0 - a * a);
                if dz == 0.0 {
                    continue;
                }
                grad[b1 + i] += dz;
                let row = w1 + i * feat_dim;
                for j in 0..feat_dim {
                    grad[row + j] += dz * act.features[j];
                    dfeat[j] += dz * p[row + j];
                }
            }
            dfeat
        } else {
            dhead
        };

        for (j, &tok) in act.slots.iter().enumerate() {
            let base = emb + tok * d;
            for c in 0..d {
                grad[base + c] += dfeat[j * d + c];
            }
        }
    }

    pub fn write_to<W: Write>(&self, kind: ModelKind, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(kind as u32).to_le_bytes())?;
        for v in [self.in_vocab, self.window, self.embed_dim, self.hidden, self.out_dim, self.params.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for x in &self.params {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(expected: ModelKind, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = read_u32(&mut r)?;
        if kind != expected as u32 {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds model kind {kind}, expected {}",
                expected as u32
            )));
        }
        let mut dims = [0usize; 6];
        for slot in dims.iter_mut() {
            *slot = read_u64(&mut r)? as usize;
        }
        let [in_vocab, window, embed_dim, hidden, out_dim, n] = dims;
        if n != Self::param_count(in_vocab, window, embed_dim, hidden, out_dim) {
            return Err(Error::Checkpoint(format!(
                "parameter count {n} does not match dimensions"
            )));
        }
        let mut params = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            params.push(f64::from_le_bytes(buf));
        }
        Ok(Self {
            in_vocab,
            window,
            embed_dim,
            hidden,
            out_dim,
            params,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GACM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Tag stored in checkpoints so a value head is never loaded as a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ModelKind {
    Sequence = 0,
    ValueHead = 1,
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cached forward state for one `(context, token)` pair.
#[derive(Clone, Debug)]
pub struct TokenPass {
    pub logprob: f64,
    act: Activations,
    log_probs: Vec<f64>,
    token: Token,
}

/// Autoregressive categorical model over a single vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqModel {
    pub net: Mlp,
}

impl SeqModel {
    pub fn zeros(vocab_size: usize, context_window: usize, embed_dim: usize, hidden: usize) -> Self {
        Self {
            net: Mlp::zeros(vocab_size, context_window, embed_dim, hidden, vocab_size),
        }
    }

    pub fn random(
        vocab_size: usize,
        context_window: usize,
        embed_dim: usize,
        hidden: usize,
        out_scale: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut m = Self::zeros(vocab_size, context_window, embed_dim, hidden);
        m.net.init_random(out_scale, rng);
        m
    }

    pub fn vocab(&self) -> usize {
        self.net.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.net.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.net.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.net.params
    }

    pub fn logits(&self, ctx: &[Token]) -> Vec<f64> {
        self.net.forward(ctx).output
    }

    fn check_token(&self, token: Token) -> Result<()> {
        if token >= self.vocab() {
            return Err(Error::TokenOutOfRange {
                token,
                vocab: self.vocab(),
            });
        }
        Ok(())
    }

    pub fn logprob(&self, ctx: &[Token], token: Token) -> Result<f64> {
        self.check_token(token)?;
        self.net.check_context(ctx)?;
        Ok(log_softmax(&self.logits(ctx))[token])
    }

    pub fn sample(&self, ctx: &[Token], rng: &mut Rng) -> Token {
        rng::categorical(&self.probs(ctx), rng)
    }

    /// Most likely next token; ties go to the lowest index.
    pub fn greedy(&self, ctx: &[Token]) -> Token {
        let logits = self.logits(ctx);
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn grad_logprob(&self, ctx: &[Token], token: Token) -> Result<GradientVector> {
        self.check_token(token)?;
        self.net.check_context(ctx)?;
        let mut g = GradientVector::zeros(self.param_count());
        self.accumulate_logprob_grad(ctx, token, 1.0, &mut g.0);
        Ok(g)
    }

    /// Adds `weight · ∇ log p(token | ctx)` to `grad` and returns the log-probability.
    pub fn accumulate_logprob_grad(&self, ctx: &[Token], token: Token, weight: f64, grad: &mut [f64]) -> f64 {
        let pass = self.token_pass(ctx, token);
        self.backprop(&pass, weight, grad);
        pass.logprob
    }

    /// Forward pass for one token, kept so the backward pass can reuse it.
    pub fn token_pass(&self, ctx: &[Token], token: Token) -> TokenPass {
        let act = self.net.forward(ctx);
        let log_probs = log_softmax(&act.output);
        TokenPass {
            logprob: log_probs[token],
            act,
            log_probs,
            token,
        }
    }

    /// Adds `weight · ∇ log p(token | ctx)` for a stored pass.
    pub fn backprop(&self, pass: &TokenPass, weight: f64, grad: &mut [f64]) {
        if weight == 0.0 {
            return;
        }
        let mut dout: Vec<f64> = pass.log_probs.iter().map(|lp| -lp.exp()).collect();
        dout[pass.token] += 1.0;
        self.net.backward(&pass.act, &dout, weight, grad);
    }

    /// `log p(seq | ctx)` under teacher forcing.
    pub fn sequence_logprob(&self, ctx: &[Token], seq: &[Token]) -> f64 {
        let mut full = ctx.to_vec();
        let mut total = 0.0;
        for &tok in seq {
            total += log_softmax(&self.logits(&full))[tok];
            full.push(tok);
        }
        total
    }

    /// Adds `weight · ∇ log p(seq | ctx)` to `grad`; returns the log-likelihood.
    pub fn accumulate_sequence_grad(&self, ctx: &[Token], seq: &[Token], weight: f64, grad: &mut [f64]) -> f64 {
        let mut full = Vec::with_capacity(ctx.len() + seq.len());
        full.extend_from_slice(ctx);
        let mut total = 0.0;
        for &tok in seq {
            total += self.accumulate_logprob_grad(&full, tok, weight, grad);
            full.push(tok);
        }
        total
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.net.write_to(ModelKind::Sequence, f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let net = Mlp::read_from(ModelKind::Sequence, f)?;
        if net.in_vocab != net.out_dim {
            return Err(Error::Checkpoint("sequence model with mismatched vocabularies".into()));
        }
        Ok(Self { net })
    }
}

impl Policy for SeqModel {
    fn vocab_size(&self) -> usize {
        self.vocab()
    }

    fn probs(&self, context: &[Token]) -> Vec<f64> {
        softmax(&self.logits(context))
    }
}

/// Plain gradient descent: `params ← params − lr · grad`.
pub fn sgd_step(params: &mut [f64], grad: &GradientVector, lr: f64) {
    for (p, g) in params.iter_mut().zip(&grad.0) {
        *p -= lr * g;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Stateful first-order optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let second = match kind {
            OptimizerKind::Adam { .. } => vec![0.0; n_params],
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self {
            kind,
            first: vec![0.0; n_params],
            second,
            steps: 0,
        }
    }

    /// One descent step on `grad` (the gradient of a loss to minimise).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                if momentum == 0.0 {
                    for (p, g) in params.iter_mut().zip(grad) {
                        *p -= lr * g;
                    }
                    return;
                }
                for ((p, g), v) in params.iter_mut().zip(grad).zip(self.first.iter_mut()) {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let mhat = self.first[i] / c1;
                    let vhat = self.second[i] / c2;
                    params[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}
