//! Reproducible random streams.
//!
//! Every stream is ChaCha20 (rand_chacha) keyed from the 64-bit master seed
//! with `SeedableRng::seed_from_u64`, and the 64-bit ChaCha stream id picks an
//! independent sequence. ChaCha is a counter-based generator, so a
//! `(seed, stream)` pair yields the same draws on every platform and under any
//! thread schedule. Experiment trials pack `(sweep, trial, purpose)` into the
//! stream id, see [`RngStream::for_trial`].

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

/// What a trial-level stream is used for. Separate purposes keep, e.g., the
/// noise draw independent of which random selectors are configured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Instance = 0,
    Placement = 1,
    Signal = 2,
    Noise = 3,
    Selector = 4,
    Diagnostics = 5,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Stream id layout: bits 40..64 sweep index, 8..40 trial index, 0..8 purpose.
    pub fn for_trial(seed: u64, sweep: usize, trial: usize, purpose: Purpose) -> Self {
        debug_assert!(sweep < (1 << 24) && trial < (1 << 32));
        let stream = ((sweep as u64) << 40) | ((trial as u64) << 8) | purpose as u64;
        RngStream { seed, stream }
    }

    /// Stream shared by a whole run (fixed instance draws).
    pub fn for_run(seed: u64, purpose: Purpose) -> Self {
        RngStream::for_trial(seed, (1 << 24) - 1, 0, purpose)
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Uniform sample of `k` items from `pool` without replacement, returned sorted.
pub fn sample_without_replacement<R: Rng + ?Sized>(rng: &mut R, pool: &[usize], k: usize) -> Vec<usize> {
    assert!(k <= pool.len(), "cannot draw {k} of {}", pool.len());
    let mut items: Vec<usize> = pool.choose_multiple(rng, k).copied().collect();
    items.sort_unstable();
    items
}

/// Uniformly random permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut items: Vec<usize> = (0..n).collect();
    items.shuffle(rng);
    items
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_draws() {
        let a: Vec<u64> = (0..8).map(|_| RngStream::new(42, 7).rng().random()).collect();
        let mut r = RngStream::new(42, 7).rng();
        let first: u64 = r.random();
        assert!(a.iter().all(|&x| x == first));
        let mut r1 = RngStream::new(42, 7).rng();
        let mut r2 = RngStream::new(42, 8).rng();
        let x: Vec<u32> = (0..4).map(|_| r1.random()).collect();
        let y: Vec<u32> = (0..4).map(|_| r2.random()).collect();
        assert_ne!(x, y);
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut r = RngStream::new(1, 0).rng();
        for _ in 0..100 {
            let s = sample_without_replacement(&mut r, &[3, 5, 8, 9, 11], 3);
            assert_eq!(s.len(), 3);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        let mut p = permutation(&mut r, 10);
        p.sort_unstable();
        assert_eq!(p, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn trial_streams_are_distinct() {
        let a = RngStream::for_trial(1, 0, 1, Purpose::Noise);
        let b = RngStream::for_trial(1, 1, 0, Purpose::Noise);
        let c = RngStream::for_trial(1, 0, 1, Purpose::Placement);
        assert_ne!(a.stream, b.stream);
        assert_ne!(a.stream, c.stream);
    }
}
