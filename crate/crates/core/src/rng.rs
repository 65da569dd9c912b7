//! Portable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the 64-bit run seed
//! (expanded with `seed_from_u64`) and selected by a 64-bit stream id, so
//! per-slice draws do not depend on generation order or thread count.
//!
//! Variates are derived with fixed formulas so that another implementation
//! can reproduce them bit for bit:
//! - uniform on [0, 1): `(next_u64 >> 11) * 2^-53`
//! - standard normal: Box-Muller on two uniforms, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`
//!   (one variate per pair, the sine branch is discarded)
//! - Laplace(0, b): inverse CDF, `-b * sign(u - 1/2) * ln(1 - 2|u - 1/2|)`

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream purposes, mixed into the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    ControlValues = 2,
    OutlierSelection = 3,
    OutlierAngle = 4,
    ObservationNoise = 5,
    OutlierGarbage = 6,
    ChainLatent = 7,
    Phantom = 8,
}

/// Builds a stream id from a purpose and up to two integer keys
/// (typically contrast and level).
pub fn stream_id(purpose: Purpose, a: u64, b: u64) -> u64 {
    ((purpose as u64) << 56) ^ ((a & 0xff_ffff) << 32) ^ (b & 0xffff_ffff)
}

#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Stream { inner }
    }

    pub fn for_purpose(seed: u64, purpose: Purpose, a: u64, b: u64) -> Self {
        Self::new(seed, stream_id(purpose, a, b))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `0..n` by rejection sampling (unbiased).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn laplace(&mut self, b: f64) -> f64 {
        let u = self.uniform() - 0.5;
        -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    /// Chooses `k` distinct indices from `0..n` (partial Fisher-Yates),
    /// returned in ascending order.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut out = pool[..k].to_vec();
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = Stream::new(7, 1);
        let mut b = Stream::new(7, 1);
        let mut c = Stream::new(7, 2);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(1, 0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(3, 9);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn choose_is_distinct_sorted() {
        let mut s = Stream::new(5, 5);
        let picks = s.choose(50, 5);
        assert_eq!(picks.len(), 5);
        for w in picks.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(s.choose(3, 10).len() == 3);
    }
}
