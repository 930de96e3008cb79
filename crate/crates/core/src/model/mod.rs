//! Measurement model, objective, distance metric and the block-sparse
//! hard-thresholding projection.
//!
//! Blocks and entries are indexed from 0: block `b` covers entries
//! `b*B .. (b+1)*B`.

mod io;

pub use io::{read_instance, write_instance, write_instance_csv, INSTANCE_MAGIC};

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::{dist2, norm2, Matrix, RngStream};

/// Partition of `0..n` into `num_blocks` contiguous blocks of `block_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockStructure {
    block_len: usize,
    num_blocks: usize,
}

impl BlockStructure {
    pub fn new(block_len: usize, num_blocks: usize) -> Result<Self> {
        if block_len == 0 || num_blocks == 0 {
            return Err(Error::Dimension(format!(
                "block length ({block_len}) and block count ({num_blocks}) must both be positive"
            )));
        }
        Ok(Self { block_len, num_blocks })
    }

    /// Blocks of length `block_len` covering `0..n`; `n` must be a multiple.
    pub fn for_dimension(n: usize, block_len: usize) -> Result<Self> {
        if block_len == 0 || !n.is_multiple_of(block_len) {
            return Err(Error::Dimension(format!(
                "dimension {n} is not a positive multiple of block length {block_len}"
            )));
        }
        Self::new(block_len, n / block_len)
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn dim(&self) -> usize {
        self.block_len * self.num_blocks
    }

    #[inline]
    pub fn block_range(&self, b: usize) -> Range<usize> {
        b * self.block_len..(b + 1) * self.block_len
    }

    /// Entry indices of the given blocks, in block order.
    pub fn expand(&self, blocks: &[usize]) -> Vec<usize> {
        blocks.iter().flat_map(|&b| self.block_range(b)).collect()
    }

    pub fn block_sq_norms(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim());
        u.chunks_exact(self.block_len).map(|c| c.iter().map(|v| v * v).sum()).collect()
    }

    /// Blocks with at least one nonzero entry, ascending.
    pub fn nonzero_blocks(&self, u: &[f64]) -> Vec<usize> {
        u.chunks_exact(self.block_len)
            .enumerate()
            .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
            .map(|(b, _)| b)
            .collect()
    }
}

/// An estimate `z` together with the blocks it is allowed to occupy.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalEstimate {
    pub z: Vec<f64>,
    /// Ascending block indices.
    pub support_blocks: Vec<usize>,
}

/// A sensing matrix, a ground-truth block-sparse signal, and the magnitude
/// measurements `psi_i = |<a_i, x>| (+ noise)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    blocks: BlockStructure,
    k: usize,
    a: Matrix,
    x: Vec<f64>,
    psi: Vec<f64>,
    noise_sigma: f64,
    seed: u64,
}

impl ProblemInstance {
    /// Assembles an instance from its parts, checking shapes only.
    pub fn new(
        a: Matrix,
        x: Vec<f64>,
        psi: Vec<f64>,
        blocks: BlockStructure,
        k: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = blocks.dim();
        if a.cols() != n || x.len() != n {
            return Err(Error::Dimension(format!(
                "matrix has {} columns and signal has {} entries; blocks cover {n}",
                a.cols(),
                x.len()
            )));
        }
        if a.rows() == 0 || psi.len() != a.rows() {
            return Err(Error::Dimension(format!("{} measurements for a matrix with {} rows", psi.len(), a.rows())));
        }
        if k > blocks.num_blocks() {
            return Err(Error::Dimension(format!("sparsity {k} exceeds block count {}", blocks.num_blocks())));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!("noise sigma {noise_sigma} must be finite and >= 0")));
        }
        Ok(Self { blocks, k, a, x, psi, noise_sigma, seed })
    }

    pub fn n(&self) -> usize {
        self.blocks.dim()
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn sensing(&self) -> &Matrix {
        &self.a
    }

    pub fn signal(&self) -> &[f64] {
        &self.x
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same sensing matrix, signal and measurements multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.x.iter_mut().for_each(|v| *v *= c);
        out.psi.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// Distribution of the nonzero entries of a generated signal (before
/// normalization to unit norm).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalProfile {
    /// i.i.d. standard normal.
    Gaussian,
    /// Random sign times a magnitude uniform on `[0.75, 1.25]`.
    Comparable,
}

/// Unit-norm signal supported on `k` blocks drawn uniformly without
/// replacement.
pub fn generate_signal(
    blocks: BlockStructure,
    k: usize,
    profile: SignalProfile,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if k == 0 || k > blocks.num_blocks() {
        return Err(Error::Dimension(format!(
            "need 1 <= k <= N_B; got k={k}, B={}, n={}",
            blocks.block_len(),
            blocks.dim()
        )));
    }
    let mut support = rng.choose_without_replacement(blocks.num_blocks(), k);
    support.sort_unstable();
    let mut x = vec![0.0; blocks.dim()];
    for j in blocks.expand(&support) {
        x[j] = match profile {
            SignalProfile::Gaussian => rng.standard_normal(),
            SignalProfile::Comparable => {
                let mag = 0.75 + 0.5 * rng.uniform();
                if rng.uniform() < 0.5 {
                    -mag
                } else {
                    mag
                }
            }
        };
    }
    let norm = norm2(&x);
    if norm == 0.0 {
        // Probability zero under either profile.
        return Err(Error::Parameter("generated an all-zero signal".into()));
    }
    x.iter_mut().for_each(|v| *v /= norm);
    Ok(x)
}

/// Draws a Gaussian instance: support blocks uniform without replacement,
/// standard-normal nonzeros normalized to `||x|| = 1`, i.i.d. `N(0, 1)`
/// sensing rows, and `psi_i = max(0, |a_i^T x| + sigma * eta_i)`.
pub fn generate_instance(
    n: usize,
    m: usize,
    k: usize,
    blocks: BlockStructure,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<ProblemInstance> {
    if n != blocks.dim() {
        return Err(Error::Dimension(format!("n={n} but blocks cover {}", blocks.dim())));
    }
    if k.saturating_mul(blocks.block_len()) > n {
        return Err(Error::Dimension(format!("k*B = {} exceeds n = {n}", k.saturating_mul(blocks.block_len()))));
    }
    let x = generate_signal(blocks, k, SignalProfile::Gaussian, rng)?;
    instance_from_signal(x, m, k, blocks, noise_sigma, rng)
}

/// Draws sensing rows and (noisy) magnitudes for a given signal.
pub fn instance_from_signal(
    x: Vec<f64>,
    m: usize,
    k: usize,
    blocks: BlockStructure,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<ProblemInstance> {
    if m == 0 {
        return Err(Error::Dimension("need at least one measurement".into()));
    }
    if x.len() != blocks.dim() {
        return Err(Error::Dimension(format!(
            "signal length {} does not match block structure ({})",
            x.len(),
            blocks.dim()
        )));
    }
    if blocks.nonzero_blocks(&x).len() > k {
        return Err(Error::Dimension(format!("signal has more than k={k} nonzero blocks")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma {noise_sigma} must be finite and >= 0")));
    }
    let n = blocks.dim();
    let mut data = vec![0.0; m * n];
    rng.fill_standard_normal(&mut data);
    let a = Matrix::from_row_major(m, n, data);
    let mut psi: Vec<f64> = a.mul_vec(&x).into_iter().map(f64::abs).collect();
    if noise_sigma > 0.0 {
        for p in psi.iter_mut() {
            *p = (*p + noise_sigma * rng.standard_normal()).max(0.0);
        }
    }
    ProblemInstance::new(a, x, psi, blocks, k, noise_sigma, rng.seed())
}

/// Amplitude least-squares objective `(1/2m) sum_i (psi_i - |a_i^T z|)^2`.
pub fn loss(instance: &ProblemInstance, z: &[f64]) -> f64 {
    assert_eq!(z.len(), instance.n());
    loss_from_products(instance.psi(), &instance.sensing().mul_vec(z))
}

pub(crate) fn loss_from_products(psi: &[f64], az: &[f64]) -> f64 {
    let sum: f64 = psi.iter().zip(az).map(|(p, v)| (p - v.abs()).powi(2)).sum();
    sum / (2.0 * psi.len() as f64)
}

/// `min(||z + x||, ||z - x||)`
pub fn dist(z: &[f64], x: &[f64]) -> f64 {
    assert_eq!(z.len(), x.len());
    let plus = z.iter().zip(x).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
    plus.min(dist2(z, x))
}

/// `dist(z, x) / ||x||`
pub fn rel_error(z: &[f64], x: &[f64]) -> f64 {
    dist(z, x) / norm2(x)
}

/// `v / |v|`, with `0` mapped to `0`.
#[inline]
pub fn sign_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Keeps the `k` blocks of largest Euclidean norm and zeroes the rest.
///
/// Equal norms are resolved toward the lower block index. `k` larger than
/// the block count keeps every block.
pub fn block_hard_threshold(u: &[f64], k: usize, blocks: BlockStructure) -> SignalEstimate {
    let norms = blocks.block_sq_norms(u);
    let support_blocks = top_k_indices(&norms, k);
    let mut z = vec![0.0; u.len()];
    for &b in &support_blocks {
        let r = blocks.block_range(b);
        z[r.clone()].copy_from_slice(&u[r]);
    }
    SignalEstimate { z, support_blocks }
}

/// Indices of the `k` largest scores (lower index first among ties),
/// returned in ascending index order.
pub(crate) fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order.truncate(k.min(scores.len()));
    order.sort_unstable();
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(len: usize, count: usize) -> BlockStructure {
        BlockStructure::new(len, count).unwrap()
    }

    #[test]
    fn block_structure_layout() {
        let s = b(3, 4);
        assert_eq!(s.dim(), 12);
        assert_eq!(s.block_range(2), 6..9);
        assert_eq!(s.expand(&[0, 3]), vec![0, 1, 2, 9, 10, 11]);
        assert!(BlockStructure::new(0, 2).is_err());
        assert!(BlockStructure::for_dimension(10, 3).is_err());
        assert_eq!(BlockStructure::for_dimension(10, 2).unwrap().num_blocks(), 5);
    }

    #[test]
    fn hard_threshold_examples() {
        let out = block_hard_threshold(&[3.0, -1.0, 2.0, 0.0], 2, b(1, 4));
        assert_eq!(out.z, vec![3.0, 0.0, 2.0, 0.0]);
        assert_eq!(out.support_blocks, vec![0, 2]);

        let out = block_hard_threshold(&[1.0, 1.0, 2.0, 0.0], 1, b(2, 2));
        assert_eq!(out.z, vec![0.0, 0.0, 2.0, 0.0]);
        assert_eq!(out.support_blocks, vec![1]);

        let sparse = [0.0, 0.0, 5.0, -4.0, 0.0, 0.0];
        assert_eq!(block_hard_threshold(&sparse, 1, b(2, 3)).z, sparse.to_vec());
    }

    #[test]
    fn hard_threshold_ties_go_low() {
        let out = block_hard_threshold(&[1.0, -1.0, 1.0, 0.5], 2, b(1, 4));
        assert_eq!(out.support_blocks, vec![0, 1]);
        let out = block_hard_threshold(&[0.0; 4], 1, b(2, 2));
        assert_eq!(out.support_blocks, vec![0]);
        let all = block_hard_threshold(&[1.0, 2.0], 5, b(1, 2));
        assert_eq!(all.support_blocks, vec![0, 1]);
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign_or_zero(2.5), 1.0);
        assert_eq!(sign_or_zero(0.0), 0.0);
        assert_eq!(sign_or_zero(-0.0), 0.0);
        assert_eq!(sign_or_zero(-1e-300), -1.0);
    }

    #[test]
    fn dist_examples() {
        let x = [0.3, -0.4, 1.2];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(dist(&x, &x), 0.0);
        assert_eq!(dist(&neg, &x), 0.0);
        assert!((dist(&[1.0, 0.0], &[0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tiny_instance_is_exact() {
        let mut rng = RngStream::new(1);
        let inst = generate_instance(4, 2, 1, b(1, 4), 0.0, &mut rng).unwrap();
        assert_eq!(inst.signal().iter().filter(|v| **v != 0.0).count(), 1);
        assert!((norm2(inst.signal()) - 1.0).abs() < 1e-12);
        for i in 0..2 {
            let want = crate::numerics::dot(inst.sensing().row(i), inst.signal()).abs();
            assert_eq!(inst.psi()[i], want);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let make = || generate_instance(30, 20, 3, b(3, 10), 0.1, &mut RngStream::new(5)).unwrap();
        assert_eq!(make(), make());
    }

    #[test]
    fn generation_rejects_bad_dimensions() {
        let mut rng = RngStream::new(1);
        assert!(generate_instance(10, 5, 20, b(1, 10), 0.0, &mut rng).is_err());
        assert!(generate_instance(10, 5, 6, b(2, 5), 0.0, &mut rng).is_err());
        assert!(generate_instance(10, 0, 1, b(1, 10), 0.0, &mut rng).is_err());
        assert!(generate_instance(12, 5, 1, b(1, 10), 0.0, &mut rng).is_err());
        assert!(generate_instance(10, 5, 1, b(1, 10), -1.0, &mut rng).is_err());
    }

    #[test]
    fn noisy_measurements_are_nonnegative() {
        let mut rng = RngStream::new(2);
        let inst = generate_instance(50, 400, 5, b(1, 50), 2.0, &mut rng).unwrap();
        assert!(inst.psi().iter().all(|&p| p >= 0.0));
        assert!(inst.psi().contains(&0.0));
    }

    #[test]
    fn mean_squared_measurement_is_signal_energy() {
        let mut rng = RngStream::new(3);
        let inst = generate_instance(100, 10_000, 5, b(1, 100), 0.0, &mut rng).unwrap();
        let ms = inst.psi().iter().map(|p| p * p).sum::<f64>() / 10_000.0;
        assert!((0.95..=1.05).contains(&ms), "{ms}");
    }

    #[test]
    fn loss_examples() {
        let mut rng = RngStream::new(4);
        let inst = generate_instance(40, 60, 4, b(2, 20), 0.0, &mut rng).unwrap();
        let x = inst.signal().to_vec();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(loss(&inst, &x), 0.0);
        assert_eq!(loss(&inst, &neg), 0.0);
        let zero_loss = inst.psi().iter().map(|p| p * p).sum::<f64>() / 120.0;
        assert!((loss(&inst, &vec![0.0; 40]) - zero_loss).abs() < 1e-15);
    }

    #[test]
    fn comparable_profile_magnitudes() {
        let mut rng = RngStream::new(8);
        let x = generate_signal(b(1, 100), 10, SignalProfile::Comparable, &mut rng).unwrap();
        let nz: Vec<f64> = x.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
        assert_eq!(nz.len(), 10);
        let (lo, hi) = nz.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo <= 1.25 / 0.75 + 1e-12);
    }
}
