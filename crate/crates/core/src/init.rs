//! Initialization: norm estimate, block-marginal support estimate and the
//! weighted spectral direction on the selected columns.
//!
//! The weighted spectral matrix is
//!
//! ```text
//! M = (l- / |I-|) sum_{i in I-} a_i a_i^T + (l+ / |I+|) sum_{i in I+} a_i a_i^T
//! I- = { i : psi_i^2 <= tau1 r^2 },   I+ = { i : psi_i^2 >= tau2 r^2 }
//! ```
//!
//! with `l- < 0 < l+`, so samples with small magnitudes push the estimate
//! away from their sensing directions while large ones pull toward them.

use crate::error::{Error, Result};
use crate::model::{top_k_indices, BlockStructure, ProblemInstance, SignalEstimate};
use crate::numerics::{erf, norm2, sym_eigen, Matrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitParams {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self { lambda_minus: -3.0, lambda_plus: 1.0, tau1: 0.5, tau2: 0.5 }
    }
}

impl InitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_minus < 0.0 && self.lambda_plus > 0.0) {
            return Err(Error::Parameter(format!(
                "need lambda_minus < 0 < lambda_plus, got {} and {}",
                self.lambda_minus, self.lambda_plus
            )));
        }
        let unit = 0.0..=1.0;
        if !(unit.contains(&self.tau1) && unit.contains(&self.tau2) && self.tau1 <= self.tau2) {
            return Err(Error::Parameter(format!("need 0 <= tau1 <= tau2 <= 1, got {} and {}", self.tau1, self.tau2)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportEstimate {
    /// `k` block indices, ascending.
    pub block_support: Vec<usize>,
    /// Entries of the selected blocks, ascending.
    pub entry_support: Vec<usize>,
    pub marginals: Vec<f64>,
}

/// Leading eigenvector of a spectral matrix plus the quantities the harness
/// reports about it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEstimate {
    pub direction: Vec<f64>,
    /// Largest and second-largest eigenvalue (NaN when the order is 1).
    pub top_eigenvalues: [f64; 2],
    pub lower_count: usize,
    pub upper_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitDiagnostics {
    pub r_hat: f64,
    /// `|I-|`; for the orthogonality-promoting baseline this is 0.
    pub lower_count: usize,
    /// `|I+|`; for the baseline, the number of retained samples.
    pub upper_count: usize,
    pub top_eigenvalues: [f64; 2],
    /// Number of true nonzero blocks inside the estimated block support.
    pub support_overlap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub estimate: SignalEstimate,
    pub support: SupportEstimate,
    pub diagnostics: InitDiagnostics,
}

/// `sqrt((1/m) sum psi_i^2)`
pub fn norm_estimate(psi: &[f64]) -> f64 {
    assert!(!psi.is_empty(), "norm estimate needs at least one sample");
    (psi.iter().map(|p| p * p).sum::<f64>() / psi.len() as f64).sqrt()
}

/// Splits samples by `psi_i^2` against `tau1 * r^2` and `tau2 * r^2`. A
/// sample exactly on a threshold lands in the set whose inequality admits
/// it, so with `tau1 == tau2` it belongs to both.
pub fn partition_samples(psi: &[f64], r_hat: f64, params: &InitParams) -> (Vec<usize>, Vec<usize>) {
    let r2 = r_hat * r_hat;
    let (lo, hi) = (params.tau1 * r2, params.tau2 * r2);
    let lower = (0..psi.len()).filter(|&i| psi[i] * psi[i] <= lo).collect();
    let upper = (0..psi.len()).filter(|&i| psi[i] * psi[i] >= hi).collect();
    (lower, upper)
}

/// Unit leading eigenvector of the weighted spectral matrix built from the
/// rows of `a_sub`.
pub fn spectral_direction(a_sub: &Matrix, psi: &[f64], params: &InitParams) -> Result<Vec<f64>> {
    Ok(spectral_estimate(a_sub, psi, params)?.direction)
}

pub fn spectral_estimate(a_sub: &Matrix, psi: &[f64], params: &InitParams) -> Result<SpectralEstimate> {
    check_rows(a_sub, psi)?;
    let r_hat = norm_estimate(psi);
    let (lower, upper) = partition_samples(psi, r_hat, params);
    if lower.is_empty() && upper.is_empty() {
        return Err(Error::EmptySampleSets);
    }
    // An empty set contributes nothing.
    let w_lower = if lower.is_empty() { 0.0 } else { params.lambda_minus / lower.len() as f64 };
    let w_upper = if upper.is_empty() { 0.0 } else { params.lambda_plus / upper.len() as f64 };

    let mut weights = vec![0.0; psi.len()];
    for &i in &lower {
        weights[i] += w_lower;
    }
    for &i in &upper {
        weights[i] += w_upper;
    }
    let mut mat = SymMatrix::zeros(a_sub.cols());
    mat.accumulate_rows(weights.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, &w)| (w, a_sub.row(i))));
    let (direction, top_eigenvalues) = leading(&mat)?;
    Ok(SpectralEstimate { direction, top_eigenvalues, lower_count: lower.len(), upper_count: upper.len() })
}

/// Orthogonality-promoting direction used by the truncated-gradient
/// baseline: keep the `ceil(fraction * m)` samples with the largest
/// `psi_i / ||a_i||` and take the leading eigenvector of the average of
/// their normalized outer products `a_i a_i^T / ||a_i||^2`.
pub fn orthogonality_promoting_estimate(a_sub: &Matrix, psi: &[f64], fraction: f64) -> Result<SpectralEstimate> {
    check_rows(a_sub, psi)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("retained fraction {fraction} must lie in (0, 1]")));
    }
    let m = psi.len();
    let keep = ((fraction * m as f64).ceil() as usize).clamp(1, m);
    let row_norms: Vec<f64> = (0..m).map(|i| norm2(a_sub.row(i))).collect();
    let ratio: Vec<f64> = (0..m).map(|i| if row_norms[i] > 0.0 { psi[i] / row_norms[i] } else { 0.0 }).collect();
    let kept = top_k_indices(&ratio, keep);

    let mut mat = SymMatrix::zeros(a_sub.cols());
    mat.accumulate_rows(
        kept.iter()
            .filter(|&&i| row_norms[i] > 0.0)
            .map(|&i| (1.0 / (keep as f64 * row_norms[i] * row_norms[i]), a_sub.row(i))),
    );
    let (direction, top_eigenvalues) = leading(&mat)?;
    Ok(SpectralEstimate { direction, top_eigenvalues, lower_count: 0, upper_count: keep })
}

fn check_rows(a_sub: &Matrix, psi: &[f64]) -> Result<()> {
    if psi.is_empty() || a_sub.rows() != psi.len() {
        return Err(Error::Dimension(format!("{} samples for a matrix with {} rows", psi.len(), a_sub.rows())));
    }
    Ok(())
}

fn leading(mat: &SymMatrix) -> Result<(Vec<f64>, [f64; 2])> {
    let mut eig = sym_eigen(mat)?;
    let second = eig.values.get(1).copied().unwrap_or(f64::NAN);
    Ok((eig.vectors.swap_remove(0), [eig.values[0], second]))
}

/// Closed-form lower bound on `E[g^2 | g^2 >= tau]` for `g ~ N(0, 1)`:
/// `(6 - tau erf(sqrt tau)) / (6 - 3 erf(sqrt tau))`.
pub fn lemma1_bound(tau: f64) -> f64 {
    assert!(tau >= 0.0, "tau must be nonnegative");
    let e = erf(tau.sqrt());
    (6.0 - tau * e) / (6.0 - 3.0 * e)
}

/// Per-entry second moments `(1/m) sum_i psi_i^2 a_ij^2`.
fn weighted_column_moments(a: &Matrix, psi: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; a.cols()];
    for (i, &p) in psi.iter().enumerate() {
        let w = p * p;
        if w == 0.0 {
            continue;
        }
        for (s, &v) in acc.iter_mut().zip(a.row(i)) {
            *s += w * v * v;
        }
    }
    let m = psi.len() as f64;
    acc.iter_mut().for_each(|s| *s /= m);
    acc
}

/// Block marginals `zeta_b = sum_{j in b} ((1/m) sum_i psi_i^2 a_ij^2)^2`.
pub fn block_marginals(a: &Matrix, psi: &[f64], blocks: BlockStructure) -> Vec<f64> {
    assert_eq!(a.rows(), psi.len());
    assert_eq!(a.cols(), blocks.dim());
    let moments = weighted_column_moments(a, psi);
    blocks.block_sq_norms(&moments)
}

/// Per-block sample mean of `sum_{j in b} psi_i^4 a_ij^4`, the statistic whose
/// expectation is `9B||x||^4 + 24 sum_{j in b} x_j^4 + 72 ||x_b||^2 ||x||^2`.
pub fn block_fourth_moments(a: &Matrix, psi: &[f64], blocks: BlockStructure) -> Vec<f64> {
    assert_eq!(a.rows(), psi.len());
    let mut acc = vec![0.0; a.cols()];
    for (i, &p) in psi.iter().enumerate() {
        let w = p.powi(4);
        for (s, &v) in acc.iter_mut().zip(a.row(i)) {
            *s += w * v.powi(4);
        }
    }
    let m = psi.len() as f64;
    acc.chunks_exact(blocks.block_len()).map(|c| c.iter().sum::<f64>() / m).collect()
}

/// Top-`k` blocks by marginal (lower index first among ties).
pub fn estimate_support(marginals: &[f64], k: usize, blocks: BlockStructure) -> SupportEstimate {
    assert_eq!(marginals.len(), blocks.num_blocks());
    let block_support = top_k_indices(marginals, k);
    let entry_support = blocks.expand(&block_support);
    SupportEstimate { block_support, entry_support, marginals: marginals.to_vec() }
}

/// Weighted spectral initialization `z0 = r_hat * d`, where `d` is the
/// zero-padded leading direction on the estimated support.
pub fn initialize(instance: &ProblemInstance, k: usize, params: &InitParams) -> Result<SignalEstimate> {
    Ok(initialize_detailed(instance, k, params, None)?.estimate)
}

pub fn initialize_detailed(
    instance: &ProblemInstance,
    k: usize,
    params: &InitParams,
    truth: Option<&[f64]>,
) -> Result<Initialization> {
    params.validate()?;
    assemble(instance, k, truth, |a_sub, psi| spectral_estimate(a_sub, psi, params))
}

/// Baseline initialization: same support step, orthogonality-promoting
/// direction on the retained `ceil(fraction * m)` samples.
pub fn sparta_initialize_detailed(
    instance: &ProblemInstance,
    k: usize,
    fraction: f64,
    truth: Option<&[f64]>,
) -> Result<Initialization> {
    assemble(instance, k, truth, |a_sub, psi| orthogonality_promoting_estimate(a_sub, psi, fraction))
}

fn assemble(
    instance: &ProblemInstance,
    k: usize,
    truth: Option<&[f64]>,
    direction: impl FnOnce(&Matrix, &[f64]) -> Result<SpectralEstimate>,
) -> Result<Initialization> {
    let blocks = instance.blocks();
    if k == 0 || k > blocks.num_blocks() {
        return Err(Error::Dimension(format!("need 1 <= k <= N_B = {}, got k = {k}", blocks.num_blocks())));
    }
    let psi = instance.psi();
    let marginals = block_marginals(instance.sensing(), psi, blocks);
    let support = estimate_support(&marginals, k, blocks);
    let a_sub = instance.sensing().select_columns(&support.entry_support);
    let spectral = direction(&a_sub, psi)?;
    let r_hat = norm_estimate(psi);

    let mut z = vec![0.0; instance.n()];
    for (&j, &d) in support.entry_support.iter().zip(&spectral.direction) {
        z[j] = r_hat * d;
    }
    let support_overlap = truth.map(|x| {
        let true_blocks = blocks.nonzero_blocks(x);
        support.block_support.iter().filter(|b| true_blocks.binary_search(b).is_ok()).count()
    });
    Ok(Initialization {
        estimate: SignalEstimate { z, support_blocks: support.block_support.clone() },
        diagnostics: InitDiagnostics {
            r_hat,
            lower_count: spectral.lower_count,
            upper_count: spectral.upper_count,
            top_eigenvalues: spectral.top_eigenvalues,
            support_overlap,
        },
        support,
    })
}
