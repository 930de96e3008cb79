//! Gradient refinement: the amplitude-flow gradient, its reweighted and
//! truncated variants, and the hard-thresholded iterations built on them.
//!
//! Both solvers run `z <- H_k^B(z - mu * g(z))` where `g` is the reweighted
//! gradient (CRAF) or the truncated gradient (SPARTA baseline).

use std::io::Write;

use crate::error::{Error, Result};
use crate::init::{initialize_detailed, sparta_initialize_detailed, InitDiagnostics, InitParams};
use crate::model::{
    block_hard_threshold, loss_from_products, rel_error, sign_or_zero, ProblemInstance, SignalEstimate,
};
use crate::numerics::{dist2, norm2};

/// Per-sample weighting parameters `beta_i`.
#[derive(Clone, Debug, PartialEq)]
pub enum Beta {
    Constant(f64),
    PerSample(Vec<f64>),
}

impl Beta {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Beta::Constant(b) => *b,
            Beta::PerSample(v) => v[i],
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let ok = match self {
            Beta::Constant(b) => *b > 0.0 && b.is_finite(),
            Beta::PerSample(v) => v.len() == m && v.iter().all(|b| *b > 0.0 && b.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("beta must be {m} positive finite values")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrafParams {
    pub mu: f64,
    pub beta: Beta,
    pub tau_w: f64,
    pub max_iters: usize,
    /// Stop once `||z^{t+1} - z^t|| / ||z^t||` falls below this; 0 disables.
    pub early_stop_tol: f64,
    pub init: InitParams,
}

impl Default for CrafParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta: Beta::Constant(0.6),
            tau_w: 0.1,
            max_iters: 1000,
            early_stop_tol: 1e-14,
            init: InitParams::default(),
        }
    }
}

impl CrafParams {
    pub fn validate(&self, m: usize) -> Result<()> {
        check_common(self.mu, self.max_iters, self.early_stop_tol)?;
        if !(self.tau_w > 0.0 && self.tau_w <= 1.0) {
            return Err(Error::Parameter(format!("tau_w = {} must lie in (0, 1]", self.tau_w)));
        }
        self.beta.validate(m)?;
        self.init.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpartaParams {
    pub mu: f64,
    pub tau_g: f64,
    pub max_iters: usize,
    pub early_stop_tol: f64,
    /// Share of samples kept by the orthogonality-promoting initializer.
    pub init_fraction: f64,
}

impl Default for SpartaParams {
    fn default() -> Self {
        Self { mu: 1.0, tau_g: 0.7, max_iters: 1000, early_stop_tol: 1e-14, init_fraction: 1.0 / 6.0 }
    }
}

impl SpartaParams {
    pub fn validate(&self) -> Result<()> {
        check_common(self.mu, self.max_iters, self.early_stop_tol)?;
        if !(self.tau_g >= 0.0) {
            return Err(Error::Parameter(format!("tau_g = {} must be >= 0", self.tau_g)));
        }
        if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) {
            return Err(Error::Parameter(format!("init fraction {} must lie in (0, 1]", self.init_fraction)));
        }
        Ok(())
    }
}

fn check_common(mu: f64, max_iters: usize, tol: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Parameter(format!("step size {mu} must be positive")));
    }
    if max_iters == 0 {
        return Err(Error::Parameter("need at least one iteration".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::Parameter(format!("early-stop tolerance {tol} must be >= 0")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `dist(z^t, x) / ||x||`, present only when the truth was supplied.
    pub rel_error: Option<f64>,
    pub loss: f64,
    /// CRAF: samples whose weight sits at the floor `tau_w`.
    /// SPARTA: samples dropped by the truncation rule.
    pub floored: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    /// One record per iterate `z^0 ..= z^iterations`.
    pub records: Vec<IterRecord>,
    pub estimate: SignalEstimate,
    pub iterations: usize,
    pub early_stopped: bool,
    pub init: Option<InitDiagnostics>,
}

impl SolveTrace {
    pub fn final_rel_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rel_error)
    }

    pub fn rel_errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.rel_error).collect()
    }
}

/// Trace CSV: `iter,rel_error,loss,floored_weight_count`.
pub fn write_trace_csv<W: Write>(trace: &SolveTrace, mut w: W) -> Result<()> {
    writeln!(w, "iter,rel_error,loss,floored_weight_count")?;
    for r in &trace.records {
        let err = r.rel_error.map(|e| e.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.iter, err, r.loss, r.floored)?;
    }
    w.flush()?;
    Ok(())
}

/// Residual `a_i^T z - psi_i sign(a_i^T z)`.
#[inline]
fn residual(az: f64, psi: f64) -> f64 {
    az - psi * sign_or_zero(az)
}

/// `(1/m) A^T c`
fn back_project(instance: &ProblemInstance, coeffs: &[f64]) -> Vec<f64> {
    let m = instance.m() as f64;
    let mut g = instance.sensing().mul_transpose_vec(coeffs);
    g.iter_mut().for_each(|v| *v /= m);
    g
}

/// Generalized gradient `(1/m) sum_i (a_i^T z - psi_i sign(a_i^T z)) a_i`.
pub fn amplitude_gradient(instance: &ProblemInstance, z: &[f64]) -> Vec<f64> {
    let az = instance.sensing().mul_vec(z);
    let coeffs: Vec<f64> = az.iter().zip(instance.psi()).map(|(&v, &p)| residual(v, p)).collect();
    back_project(instance, &coeffs)
}

/// `w_i = max(tau_w, |a_i^T z| / (|a_i^T z| + psi_i beta_i))`.
///
/// The ratio is `0/0` when both `a_i^T z` and `psi_i` vanish; it is taken as
/// 0 there, leaving the floor.
pub fn reweighting_weights(instance: &ProblemInstance, z: &[f64], beta: &Beta, tau_w: f64) -> Vec<f64> {
    let az = instance.sensing().mul_vec(z);
    weights_from_products(&az, instance.psi(), beta, tau_w)
}

fn weights_from_products(az: &[f64], psi: &[f64], beta: &Beta, tau_w: f64) -> Vec<f64> {
    az.iter()
        .zip(psi)
        .enumerate()
        .map(|(i, (&v, &p))| {
            let mag = v.abs();
            let denom = mag + p * beta.at(i);
            let ratio = if denom > 0.0 { mag / denom } else { 0.0 };
            ratio.max(tau_w)
        })
        .collect()
}

/// Reweighted gradient `(1/m) sum_i w_i (a_i^T z - psi_i sign(a_i^T z)) a_i`.
pub fn reweighted_gradient(instance: &ProblemInstance, z: &[f64], beta: &Beta, tau_w: f64) -> Vec<f64> {
    let az = instance.sensing().mul_vec(z);
    let w = weights_from_products(&az, instance.psi(), beta, tau_w);
    let coeffs: Vec<f64> = az.iter().zip(instance.psi()).zip(&w).map(|((&v, &p), &wi)| wi * residual(v, p)).collect();
    back_project(instance, &coeffs)
}

#[inline]
fn kept_by_truncation(az: f64, psi: f64, tau_g: f64) -> bool {
    psi == 0.0 || az.abs() >= tau_g * psi
}

/// Truncated gradient over `{ i : |a_i^T z| >= tau_g psi_i }`; samples with
/// `psi_i = 0` are always kept.
pub fn truncated_gradient(instance: &ProblemInstance, z: &[f64], tau_g: f64) -> Vec<f64> {
    let az = instance.sensing().mul_vec(z);
    let coeffs: Vec<f64> = az
        .iter()
        .zip(instance.psi())
        .map(|(&v, &p)| if kept_by_truncation(v, p, tau_g) { residual(v, p) } else { 0.0 })
        .collect();
    back_project(instance, &coeffs)
}

/// Full CRAF: weighted spectral initialization, then reweighted
/// hard-thresholded gradient steps. `truth` only feeds the trace.
pub fn craf_solve(
    instance: &ProblemInstance,
    k: usize,
    params: &CrafParams,
    truth: Option<&[f64]>,
) -> Result<SolveTrace> {
    params.validate(instance.m())?;
    let init = initialize_detailed(instance, k, &params.init, truth)?;
    let mut trace = craf_solve_from(instance, k, params, init.estimate.z, truth)?;
    trace.init = Some(init.diagnostics);
    Ok(trace)
}

/// CRAF iterations from a caller-supplied starting point.
pub fn craf_solve_from(
    instance: &ProblemInstance,
    k: usize,
    params: &CrafParams,
    z0: Vec<f64>,
    truth: Option<&[f64]>,
) -> Result<SolveTrace> {
    params.validate(instance.m())?;
    let (beta, tau_w) = (&params.beta, params.tau_w);
    let stepper = |az: &[f64], psi: &[f64], coeffs: &mut Vec<f64>| {
        let w = weights_from_products(az, psi, beta, tau_w);
        coeffs.clear();
        coeffs.extend(az.iter().zip(psi).zip(&w).map(|((&v, &p), &wi)| wi * residual(v, p)));
        w.iter().filter(|&&wi| wi == tau_w).count()
    };
    iterate(instance, k, params.mu, params.max_iters, params.early_stop_tol, z0, truth, stepper)
}

/// SPARTA baseline: orthogonality-promoting initialization on the same
/// support estimate, then truncated hard-thresholded gradient steps.
pub fn sparta_solve(
    instance: &ProblemInstance,
    k: usize,
    params: &SpartaParams,
    truth: Option<&[f64]>,
) -> Result<SolveTrace> {
    params.validate()?;
    let init = sparta_initialize_detailed(instance, k, params.init_fraction, truth)?;
    let mut trace = sparta_solve_from(instance, k, params, init.estimate.z, truth)?;
    trace.init = Some(init.diagnostics);
    Ok(trace)
}

pub fn sparta_solve_from(
    instance: &ProblemInstance,
    k: usize,
    params: &SpartaParams,
    z0: Vec<f64>,
    truth: Option<&[f64]>,
) -> Result<SolveTrace> {
    params.validate()?;
    let tau_g = params.tau_g;
    let stepper = |az: &[f64], psi: &[f64], coeffs: &mut Vec<f64>| {
        coeffs.clear();
        let mut dropped = 0;
        coeffs.extend(az.iter().zip(psi).map(|(&v, &p)| {
            if kept_by_truncation(v, p, tau_g) {
                residual(v, p)
            } else {
                dropped += 1;
                0.0
            }
        }));
        dropped
    };
    iterate(instance, k, params.mu, params.max_iters, params.early_stop_tol, z0, truth, stepper)
}

#[allow(clippy::too_many_arguments)]
fn iterate<F>(
    instance: &ProblemInstance,
    k: usize,
    mu: f64,
    max_iters: usize,
    tol: f64,
    z0: Vec<f64>,
    truth: Option<&[f64]>,
    mut stepper: F,
) -> Result<SolveTrace>
where
    F: FnMut(&[f64], &[f64], &mut Vec<f64>) -> usize,
{
    let blocks = instance.blocks();
    if k == 0 || k > blocks.num_blocks() {
        return Err(Error::Dimension(format!("need 1 <= k <= N_B = {}, got k = {k}", blocks.num_blocks())));
    }
    if z0.len() != instance.n() || truth.is_some_and(|x| x.len() != instance.n()) {
        return Err(Error::Dimension("starting point or truth has the wrong length".into()));
    }
    let psi = instance.psi();
    let scale = mu / instance.m() as f64;
    let record = |t: usize, z: &[f64], az: &[f64], floored: usize| IterRecord {
        iter: t,
        rel_error: truth.map(|x| rel_error(z, x)),
        loss: loss_from_products(psi, az),
        floored,
    };

    let mut records = Vec::with_capacity(max_iters.min(4096) + 1);
    let mut coeffs = Vec::with_capacity(instance.m());
    let mut z = z0;
    let mut support_blocks = blocks.nonzero_blocks(&z);
    let mut iterations = 0;
    let mut early_stopped = false;

    while iterations < max_iters {
        let az = instance.sensing().mul_vec(&z);
        let floored = stepper(&az, psi, &mut coeffs);
        records.push(record(iterations, &z, &az, floored));

        coeffs.iter_mut().for_each(|c| *c *= scale);
        let mut u = instance.sensing().mul_transpose_vec(&coeffs);
        for (ui, zi) in u.iter_mut().zip(&z) {
            *ui = zi - *ui;
        }
        let next = block_hard_threshold(&u, k, blocks);
        let change = dist2(&next.z, &z) / norm2(&z).max(1e-30);
        z = next.z;
        support_blocks = next.support_blocks;
        iterations += 1;
        if !change.is_finite() {
            // Diverged; further steps only produce inf/NaN.
            break;
        }
        if change < tol {
            early_stopped = true;
            break;
        }
    }

    let az = instance.sensing().mul_vec(&z);
    let floored = stepper(&az, psi, &mut coeffs);
    records.push(record(iterations, &z, &az, floored));

    Ok(SolveTrace { records, estimate: SignalEstimate { z, support_blocks }, iterations, early_stopped, init: None })
}
