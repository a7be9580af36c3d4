//! Seeded random streams.
//!
//! Every stochastic consumer derives its own ChaCha stream from the run seed
//! plus a key path (for example `[ROLLOUT, iteration, trajectory]`), so results
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const PROMPTS: u64 = 1;
pub const ROLLOUT: u64 = 2;
pub const EVAL: u64 = 3;
pub const CRITIC: u64 = 4;
pub const INIT: u64 = 5;
pub const SFT: u64 = 6;
pub const BENCH: u64 = 7;
pub const MINIBATCH: u64 = 8;
pub const PROBE: u64 = 9;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent stream from `seed` and a key path.
pub fn stream(seed: u64, key: &[u64]) -> Rng {
    let id = key
        .iter()
        .fold(0x5EED_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws an index from a categorical distribution given by `probs`.
pub fn categorical(probs: &[f64], rng: &mut Rng) -> usize {
    use rand::Rng as _;
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: fall back to the last index with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
