//! Seed plumbing. Every random draw in the crate comes from a ChaCha20
//! stream keyed by an explicit user seed, a purpose tag and a counter, so
//! results do not depend on thread count or on how many items are drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, tag: &str) -> u64 {
    tag.bytes().fold(mix(seed), |acc, b| mix(acc ^ u64::from(b)))
}

/// Independent substream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn tagged_rng(seed: u64, tag: &str) -> ChaCha20Rng {
    stream_rng(derive_seed(seed, tag), 0)
}

/// Inverse-CDF draw from a discrete distribution given a uniform `u` in [0, 1).
pub(crate) fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero
}
