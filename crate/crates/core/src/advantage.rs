//! Advantage estimators (GAE, GRPO, RLOO) and segment-level value broadcast.

use serde::{Deserialize, Serialize};

use crate::env::Token;
use crate::error::{Error, Result};

/// Per-token advantages aligned with one response.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageVector(pub Vec<f64>);

impl AdvantageVector {
    /// The same advantage on every one of `len` tokens.
    pub fn uniform(value: f64, len: usize) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Generalized advantage estimation over one trajectory.
///
/// `values[t]` is `v(s_t)`; the value after the last step is taken to be 0.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<AdvantageVector> {
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch {
            what: "gae values",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "gamma and lambda must lie in [0, 1], got {gamma} and {lambda}"
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    Ok(AdvantageVector(adv))
}

/// Terminal-only reward vector: zeros with `reward` on the last step.
pub fn terminal_rewards(reward: f64, len: usize) -> Vec<f64> {
    let mut r = vec![0.0; len];
    if let Some(last) = r.last_mut() {
        *last = reward;
    }
    r
}

fn check_group(rewards: &[f64]) -> Result<()> {
    if rewards.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    Ok(())
}

/// Group-normalised advantages `(r_i − mean) / std` with population std.
/// A group with zero spread gets all-zero advantages.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    check_group(rewards)?;
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Leave-one-out baseline: `r_i − mean_{j≠i} r_j`.
pub fn rloo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    check_group(rewards)?;
    let total: f64 = rewards.iter().sum();
    let others = (rewards.len() - 1) as f64;
    Ok(rewards.iter().map(|r| r - (total - r) / others).collect())
}

/// How a response is cut into segments for critic queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentRule {
    /// Segments of `len` tokens; the last one may be shorter.
    Fixed { len: usize },
    /// A segment ends right after each occurrence of `token`.
    Delimiter { token: Token },
}

impl Default for SegmentRule {
    fn default() -> Self {
        SegmentRule::Fixed { len: 2 }
    }
}

/// A partition of a response into non-empty consecutive segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    pub lengths: Vec<usize>,
}

impl Segmentation {
    /// Token index at which each segment starts.
    pub fn starts(&self) -> Vec<usize> {
        let mut acc = 0;
        self.lengths
            .iter()
            .map(|&l| {
                let s = acc;
                acc += l;
                s
            })
            .collect()
    }

    pub fn total_len(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }
}

pub fn segment(response: &[Token], rule: SegmentRule) -> Result<Segmentation> {
    if response.is_empty() {
        return Err(Error::InvalidArgument("cannot segment an empty response".into()));
    }
    let lengths = match rule {
        SegmentRule::Fixed { len } => {
            if len == 0 {
                return Err(Error::InvalidArgument("segment length must be >= 1".into()));
            }
            response.chunks(len).map(|c| c.len()).collect()
        }
        SegmentRule::Delimiter { token } => {
            let mut lengths = Vec::new();
            let mut cur = 0;
            for &t in response {
                cur += 1;
                if t == token {
                    lengths.push(cur);
                    cur = 0;
                }
            }
            if cur > 0 {
                lengths.push(cur);
            }
            lengths
        }
    };
    Ok(Segmentation { lengths })
}

/// Copies each segment value onto every token of that segment.
pub fn broadcast(segment_values: &[f64], lengths: &[usize]) -> Result<Vec<f64>> {
    if segment_values.len() != lengths.len() {
        return Err(Error::LengthMismatch {
            what: "segment values",
            expected: lengths.len(),
            got: segment_values.len(),
        });
    }
    Ok(segment_values
        .iter()
        .zip(lengths)
        .flat_map(|(&v, &l)| std::iter::repeat_n(v, l))
        .collect())
}
