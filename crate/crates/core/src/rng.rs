//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit value derived from
//! the master seed and a path of indices (trajectory, particle, purpose, ...)
//! through the SplitMix64 finalizer:
//!
//! ```text
//! key_0 = mix(master ^ 0x243F6A8885A308D3)
//! key_{i+1} = mix(key_i ^ mix(index_i + 0x9E3779B97F4A7C15 * (i + 1)))
//! ```
//!
//! Streams therefore depend only on `(seed, indices)`, never on scheduling
//! or on how many workers share the job.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 output function.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    let mut key = mix(seed ^ 0x243F_6A88_85A3_08D3);
    for (i, &index) in path.iter().enumerate() {
        let salt = 0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(i as u64 + 1);
        key = mix(key ^ mix(index.wrapping_add(salt)));
    }
    key
}

pub fn stream(seed: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_key(seed, path))
}

/// Purpose tags keep streams for different jobs under one seed apart.
pub mod purpose {
    pub const SPECTRUM: u64 = 1;
    pub const MARKOV: u64 = 2;
    pub const CLOUD: u64 = 3;
    pub const OCCUPANCY: u64 = 4;
    pub const SLOPES: u64 = 5;
    pub const MODULUS: u64 = 6;
    pub const DRIFT_GAP: u64 = 7;
    pub const LIPSCHITZ: u64 = 8;
}

/// Inverse-CDF sampler over a finite list of weights.
#[derive(Debug, Clone)]
pub struct AtomSampler {
    cumulative: Vec<f64>,
}

impl AtomSampler {
    pub fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        Self { cumulative }
    }

    /// Draws an atom index from one uniform variate. The last cumulative
    /// entry is pinned to +inf so rounding in the weights never overflows.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>();
        self.cumulative.partition_point(|&c| c <= u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_every_index() {
        let a = derive_key(7, &[1, 2]);
        assert_ne!(a, derive_key(7, &[2, 1]));
        assert_ne!(a, derive_key(8, &[1, 2]));
        assert_ne!(a, derive_key(7, &[1, 2, 0]));
        assert_eq!(a, derive_key(7, &[1, 2]));
    }

    #[test]
    fn sampler_frequencies() {
        let s = AtomSampler::new(&[0.2, 0.5, 0.3]);
        let mut rng = stream(1, &[0]);
        let mut counts = [0usize; 3];
        for _ in 0..200_000 {
            counts[s.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.5, 0.3]) {
            let f = *c as f64 / 200_000.0;
            assert!((f - p).abs() < 0.005, "{f} vs {p}");
        }
    }

    #[test]
    fn single_atom_sampler() {
        let s = AtomSampler::new(&[1.0]);
        let mut rng = stream(3, &[]);
        assert!((0..100).all(|_| s.sample(&mut rng) == 0));
    }
}
