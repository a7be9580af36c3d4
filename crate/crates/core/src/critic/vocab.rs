//! Token layout of the critic vocabulary and state/context serialization.
//!
//! ```text
//! [0, 16)   D_0..D_15      actor digits
//! [16, 32)  R_0..R_15      reasoning tokens
//! [32, 43)  SCORE_0..SCORE_10
//! 43        EOT
//! 44        BLANK          unfilled response slot
//! 45        SEP            prompt / response separator
//! 46        ASK            end of critic context
//! [47, 58)  HINT_0..HINT_10  ICC success-rate bucket
//! [58, 66)  TAG_0..TAG_7   ICC actor-size tag
//! [66, 90)  STEP_0..STEP_23
//! ```
//!
//! A state serializes to a fixed-width block so every step lines up the same way:
//! `prompt digits, SEP, T response slots (digit or BLANK), STEP_t`. The generative
//! critic context appends `HINT_b, TAG_s` when in-context conditioning is on, then `ASK`.

use crate::env::{MdpState, Token};
use crate::error::{Error, Result};

pub const MAX_DIGITS: usize = 16;
pub const N_REASON: usize = 16;
pub const N_SCORE: usize = 11;
pub const N_HINT: usize = 11;
pub const N_TAG: usize = 8;
pub const N_STEP: usize = 24;

pub const DIGIT0: Token = 0;
pub const REASON0: Token = DIGIT0 + MAX_DIGITS;
pub const SCORE0: Token = REASON0 + N_REASON;
pub const EOT: Token = SCORE0 + N_SCORE;
pub const BLANK: Token = EOT + 1;
pub const SEP: Token = BLANK + 1;
pub const ASK: Token = SEP + 1;
pub const HINT0: Token = ASK + 1;
pub const TAG0: Token = HINT0 + N_HINT;
pub const STEP0: Token = TAG0 + N_TAG;
pub const VOCAB: usize = STEP0 + N_STEP;

pub fn digit(d: Token) -> Result<Token> {
    if d >= MAX_DIGITS {
        return Err(Error::TokenOutOfRange {
            token: d,
            vocab: MAX_DIGITS,
        });
    }
    Ok(DIGIT0 + d)
}

pub fn reason(i: usize) -> Token {
    REASON0 + i.min(N_REASON - 1)
}

pub fn score(k: usize) -> Token {
    assert!(k < N_SCORE, "score index {k} out of range");
    SCORE0 + k
}

/// `Some(k)` if `tok` is `SCORE_k`.
pub fn score_index(tok: Token) -> Option<usize> {
    (SCORE0..SCORE0 + N_SCORE).contains(&tok).then(|| tok - SCORE0)
}

/// ICC bucket of a running success rate: `round(10 · r̄)`.
pub fn hint_bucket(rate: f64) -> usize {
    (10.0 * rate.clamp(0.0, 1.0)).round() as usize
}

/// Coarse size tag of an actor with `param_count` parameters.
pub fn actor_tag(param_count: usize) -> usize {
    let bits = (param_count.max(1) as f64).log2();
    ((bits / 2.0).floor() as usize).min(N_TAG - 1)
}

/// Fixed-width serialization of `state` with `horizon` response slots.
pub fn state_tokens(state: &MdpState, horizon: usize) -> Result<Vec<Token>> {
    if state.partial.len() > horizon {
        return Err(Error::LengthMismatch {
            what: "partial response",
            expected: horizon,
            got: state.partial.len(),
        });
    }
    let step = state.step();
    if step >= N_STEP {
        return Err(Error::InvalidArgument(format!("step {step} exceeds the critic vocabulary")));
    }
    let mut out = Vec::with_capacity(state.prompt.len() + horizon + 2);
    for &d in &state.prompt {
        out.push(digit(d)?);
    }
    out.push(SEP);
    for &d in &state.partial {
        out.push(digit(d)?);
    }
    out.extend(std::iter::repeat_n(BLANK, horizon - state.partial.len()));
    out.push(STEP0 + step);
    Ok(out)
}

pub fn state_tokens_len(prompt_len: usize, horizon: usize) -> usize {
    prompt_len + horizon + 2
}

/// Length of a critic context for the given shape.
pub fn context_len(prompt_len: usize, horizon: usize, icc_enabled: bool) -> usize {
    state_tokens_len(prompt_len, horizon) + if icc_enabled { 2 } else { 0 } + 1
}
