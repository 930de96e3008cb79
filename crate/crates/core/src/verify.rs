//! Self-check battery behind `craf verify`. Each check compares a library
//! routine with an independent oracle: direct sampling, finite differences
//! or exhaustive enumeration.

use std::fmt;

use crate::error::Result;
use crate::init::{block_fourth_moments, lemma1_bound};
use crate::model::{block_hard_threshold, instance_from_signal, loss, BlockStructure};
use crate::numerics::{dist2, norm2, RngStream};
use crate::refine::amplitude_gradient;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<28} {}", self.name, self.detail)
    }
}

/// Monte Carlo estimate of `E[g^2 | g^2 >= tau]` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalMoment {
    pub mean: f64,
    pub std_error: f64,
    pub accepted: usize,
}

pub fn conditional_second_moment(tau: f64, draws: usize, seed: u64) -> ConditionalMoment {
    let mut rng = RngStream::new(seed);
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for _ in 0..draws {
        let g = rng.standard_normal();
        let g2 = g * g;
        if g2 >= tau {
            n += 1;
            sum += g2;
            sum_sq += g2 * g2;
        }
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0);
    ConditionalMoment { mean, std_error: (var / n as f64).sqrt(), accepted: n }
}

/// Sampling check of the closed-form conditional-moment lower bound.
/// Passes when the estimate plus one standard error reaches the bound; at
/// `tau = 0.5` the estimate must also reach 1.42.
pub fn check_lemma1(tau: f64, draws: usize, seed: u64) -> CheckOutcome {
    let mc = conditional_second_moment(tau, draws, seed);
    let bound = lemma1_bound(tau);
    let mut passed = mc.mean + mc.std_error >= bound;
    if tau == 0.5 {
        passed &= mc.mean >= 1.42;
    }
    CheckOutcome {
        name: format!("lemma1 tau={tau}"),
        passed,
        detail: format!(
            "E[g^2|g^2>={tau}] ~ {:.5} (se {:.1e}, {} draws kept) vs bound {:.5}",
            mc.mean, mc.std_error, mc.accepted, bound
        ),
    }
}

/// On- vs off-support means of the per-block fourth-moment statistic for
/// `x = e_1` with `B = 1`. Population ratio is `105 / 9`.
pub fn fourth_moment_separation(n: usize, m: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    let blocks = BlockStructure::new(1, n)?;
    let (mut on, mut off) = (0.0, 0.0);
    for t in 0..trials {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        let mut rng = RngStream::with_stream(seed, t as u64);
        let inst = instance_from_signal(x, m, 1, blocks, 0.0, &mut rng)?;
        let stat = block_fourth_moments(inst.sensing(), inst.psi(), blocks);
        on += stat[0];
        off += stat[1..].iter().sum::<f64>() / (n - 1) as f64;
    }
    Ok((on / trials as f64, off / trials as f64))
}

pub fn check_separation(n: usize, m: usize, trials: usize, seed: u64) -> Result<CheckOutcome> {
    let (on, off) = fourth_moment_separation(n, m, trials, seed)?;
    let ratio = on / off;
    Ok(CheckOutcome {
        name: "marginal separation".into(),
        passed: ratio >= 5.0,
        detail: format!("on-support {on:.2}, off-support {off:.3}, ratio {ratio:.2} (need >= 5, population 11.67)"),
    })
}

/// Central-difference gradient of the amplitude loss.
pub fn finite_difference_gradient(instance: &crate::model::ProblemInstance, z: &[f64], step: f64) -> Vec<f64> {
    let mut probe = z.to_vec();
    (0..z.len())
        .map(|j| {
            probe[j] = z[j] + step;
            let up = loss(instance, &probe);
            probe[j] = z[j] - step;
            let down = loss(instance, &probe);
            probe[j] = z[j];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Worst relative error of the analytic gradient against central finite
/// differences over `points` random points with every `|a_i^T z| > 1e-3`.
pub fn gradient_fd_error(n: usize, m: usize, points: usize, seed: u64) -> Result<f64> {
    let blocks = BlockStructure::new(1, n)?;
    let mut rng = RngStream::new(seed);
    let x = crate::model::generate_signal(blocks, n.min(4), crate::model::SignalProfile::Gaussian, &mut rng)?;
    let inst = instance_from_signal(x, m, n.min(4), blocks, 0.0, &mut rng)?;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < points {
        let z = rng.sample_standard_normal(n);
        if inst.sensing().mul_vec(&z).iter().any(|v| v.abs() <= 1e-3) {
            continue;
        }
        let g = amplitude_gradient(&inst, &z);
        let fd = finite_difference_gradient(&inst, &z, 1e-6);
        worst = worst.max(dist2(&g, &fd) / norm2(&g));
        done += 1;
    }
    Ok(worst)
}

pub fn check_gradient(points: usize, seed: u64) -> Result<CheckOutcome> {
    let worst = gradient_fd_error(12, 40, points, seed)?;
    Ok(CheckOutcome {
        name: "gradient finite differences".into(),
        passed: worst <= 1e-4,
        detail: format!("{points} points, worst relative error {worst:.2e} (need <= 1e-4)"),
    })
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Smallest `||u - v||` over all `v` supported on `k` blocks, by enumeration.
pub fn brute_force_projection_distance(u: &[f64], k: usize, blocks: BlockStructure) -> f64 {
    combinations(blocks.num_blocks(), k)
        .iter()
        .map(|support| {
            let mut v = vec![0.0; u.len()];
            for &b in support {
                let r = blocks.block_range(b);
                v[r.clone()].copy_from_slice(&u[r]);
            }
            dist2(u, &v)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Compares `H_k^B` with exhaustive search on `cases` random vectors.
/// Returns the number of cases where the operator was not optimal.
pub fn hard_threshold_mismatches(
    num_blocks: usize,
    k: usize,
    block_len: usize,
    cases: usize,
    seed: u64,
) -> Result<usize> {
    let blocks = BlockStructure::new(block_len, num_blocks)?;
    let mut rng = RngStream::new(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let u = rng.sample_standard_normal(blocks.dim());
        let h = block_hard_threshold(&u, k, blocks);
        if dist2(&u, &h.z) > brute_force_projection_distance(&u, k, blocks) {
            bad += 1;
        }
    }
    Ok(bad)
}

pub fn check_hard_threshold(num_blocks: usize, k: usize, cases: usize, seed: u64) -> Result<CheckOutcome> {
    let mut bad = 0;
    for block_len in 1..=3 {
        bad += hard_threshold_mismatches(num_blocks, k, block_len, cases, seed + block_len as u64)?;
    }
    let supports = combinations(num_blocks, k).len();
    Ok(CheckOutcome {
        name: format!("hkb N_B={num_blocks} k={k}"),
        passed: bad == 0,
        detail: format!("{} cases x {supports} supports, {bad} suboptimal projections", 3 * cases),
    })
}

/// The default desk-scale battery.
pub fn default_battery(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out: Vec<CheckOutcome> =
        [0.1, 0.5, 1.0, 2.0].iter().map(|&tau| check_lemma1(tau, 2_000_000, seed)).collect();
    out.push(check_separation(100, 5000, 10, seed)?);
    out.push(check_gradient(20, seed)?);
    out.push(check_hard_threshold(6, 3, 50, seed)?);
    out.push(check_hard_threshold(8, 4, 50, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(6, 3).len(), 20);
        assert_eq!(combinations(8, 4).len(), 70);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn brute_force_on_known_vector() {
        let blocks = BlockStructure::new(1, 4).unwrap();
        let d = brute_force_projection_distance(&[3.0, -1.0, 2.0, 0.0], 2, blocks);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn conditional_moment_at_zero_is_variance() {
        let mc = conditional_second_moment(0.0, 200_000, 4);
        assert_eq!(mc.accepted, 200_000);
        assert!((mc.mean - 1.0).abs() < 5.0 * mc.std_error);
    }
}
