//! Seeded RNG construction and deterministic substream derivation.
//!
//! Every randomized operation in this crate takes either a seed or an
//! explicit RNG so that reruns with equal seeds are bitwise identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Build the run RNG for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer, used to mix tag words into substream seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent substream RNG from a base seed and tag words.
///
/// Used for per-sample, per-trial and per-sweep-cell streams so that work
/// can be distributed without changing results.
pub fn substream(base: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut s = splitmix64(base ^ 0xa076_1d64_78bd_642f);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    ChaCha12Rng::seed_from_u64(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let mut a = substream(7, &[1, 2]);
        let mut b = substream(7, &[1, 2]);
        let mut c = substream(7, &[2, 1]);
        let xa: u64 = a.gen();
        let xb: u64 = b.gen();
        let xc: u64 = c.gen();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc, "tag order must matter");
    }
}
