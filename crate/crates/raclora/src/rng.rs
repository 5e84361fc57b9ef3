//! Deterministic random streams.
//!
//! Every stochastic choice in this crate (sketch entries, permutations,
//! sample indices, cohort draws) is pulled from a [`RandomStream`], a thin
//! wrapper around ChaCha8 seeded from a single `u64`. Two streams built from
//! the same seed produce bit-identical draws on every platform, which is what
//! makes traces reproducible byte for byte.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded random stream with the handful of draw kinds the optimizers need.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent stream from a root seed and two tags,
    /// typically (round, client). The same triple always yields the same
    /// stream, and distinct triples yield streams that do not collide in
    /// practice (the tags are mixed through SplitMix64 before seeding).
    pub fn derive(root_seed: u64, tag_a: u64, tag_b: u64) -> Self {
        let mut z = root_seed;
        z = splitmix64(z ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(tag_a.wrapping_add(1)));
        z = splitmix64(z ^ 0xbf58_476d_1ce4_e5b9u64.wrapping_mul(tag_b.wrapping_add(1)));
        RandomStream::from_seed(splitmix64(z))
    }

    /// One draw from N(0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// ±1 with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.rng.random::<bool>() { 1.0 } else { -1.0 }
    }

    /// Uniform draw from 0..n.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform random permutation of 0..n.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order
    }

    /// k distinct indices from 0..n, uniform over subsets, in draw order.
    pub fn distinct_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct indices from 0..{n}");
        rand::seq::index::sample(&mut self.rng, n, k).into_vec()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
