use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Seeded stream of uniform and standard-normal variates.
///
/// Backed by ChaCha8, a counter-based generator, so a `(seed, stream)` pair
/// reproduces the same sequence on every platform. Normals come from the
/// Box-Muller transform; the second variate of each pair is cached.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream of the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner, spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let wide = (self.next_u64() as u128) * (bound as u128);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn sample_standard_normal(&mut self, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.fill_standard_normal(&mut out);
        out
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }

    /// `count` distinct indices drawn uniformly from `0..n`, in draw order.
    pub fn choose_without_replacement(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        // Partial Fisher-Yates.
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_draw() {
        assert!(RngStream::new(1).sample_standard_normal(0).is_empty());
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = RngStream::new(7).sample_standard_normal(3);
        let b = RngStream::new(7).sample_standard_normal(3);
        assert_eq!(a, b);
        let c = RngStream::new(8).sample_standard_normal(3);
        assert_ne!(a, c);
    }

    #[test]
    fn streams_differ() {
        let a = RngStream::with_stream(7, 0).sample_standard_normal(4);
        let b = RngStream::with_stream(7, 1).sample_standard_normal(4);
        assert_ne!(a, b);
    }

    #[test]
    fn long_run_moments() {
        let n = 1_000_000;
        let draws = RngStream::new(7).sample_standard_normal(n);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        // 5 sigma / sqrt(N) = 0.005
        assert!(mean.abs() <= 0.005, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
    }

    #[test]
    fn sampling_without_replacement_is_distinct() {
        let mut rng = RngStream::new(11);
        for _ in 0..50 {
            let mut picks = rng.choose_without_replacement(20, 7);
            picks.sort_unstable();
            picks.dedup();
            assert_eq!(picks.len(), 7);
            assert!(picks.iter().all(|&p| p < 20));
        }
    }

    #[test]
    fn below_covers_range_uniformly() {
        let mut rng = RngStream::new(5);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[rng.below(6) as usize] += 1;
        }
        for c in counts {
            assert!((9_300..10_700).contains(&c), "{counts:?}");
        }
    }
}
