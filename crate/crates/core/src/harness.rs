//! Monte Carlo experiment engine.
//!
//! Every `(grid point, trial)` pair draws one instance from a seed derived
//! from the base seed, the grid value and the trial index, and every
//! configured algorithm runs on that same instance. Trials execute on a
//! bounded rayon pool and are gathered in a fixed order, so all numeric
//! outputs except wall time are independent of the worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::init::{initialize_detailed, sparta_initialize_detailed, InitDiagnostics};
use crate::model::{generate_instance, rel_error, BlockStructure};
use crate::numerics::RngStream;
use crate::refine::{craf_solve, sparta_solve, Beta, CrafParams, SpartaParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Relative error of the initial point only, swept over `k` with `m = ratio * k`.
    InitBench,
    /// Recovery rate swept over `m`.
    SuccessCurve,
    /// Relative error swept over the noise variance at fixed `m`.
    NoiseCurve,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::InitBench => "init_bench",
            ExperimentKind::SuccessCurve => "success_curve",
            ExperimentKind::NoiseCurve => "noise_curve",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "init_bench" => Ok(Self::InitBench),
            "success_curve" => Ok(Self::SuccessCurve),
            "noise_curve" => Ok(Self::NoiseCurve),
            other => Err(Error::Config(format!("unknown experiment kind `{other}`"))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Craf,
    Sparta,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Craf => "craf",
            Algorithm::Sparta => "sparta",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "craf" => Ok(Self::Craf),
            "sparta" => Ok(Self::Sparta),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub block_len: usize,
    /// Sparsity of the generated signals (ignored by `InitBench`, which sweeps it).
    pub k_true: usize,
    /// Sparsity handed to the solvers; `None` means `k_true`.
    pub k_hat: Option<usize>,
    /// Measurement count for `NoiseCurve`.
    pub m: usize,
    /// `m = m_ratio * k` for `InitBench`.
    pub m_ratio: usize,
    /// Noise variance for `SuccessCurve` and `InitBench`.
    pub sigma2: f64,
    /// Swept values: `m`, `k`, or `sigma^2` depending on `kind`.
    pub grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub craf: CrafParams,
    pub sparta: SpartaParams,
    pub success_threshold: f64,
    /// 0 picks the available parallelism.
    pub workers: usize,
    pub keep_raw: bool,
}

impl ExperimentConfig {
    /// Full-scale defaults for each experiment (n = 3000, 100 trials).
    pub fn preset(kind: ExperimentKind) -> Self {
        let grid = match kind {
            ExperimentKind::InitBench => (25..=35).map(|k| k as f64).collect(),
            ExperimentKind::SuccessCurve => (400..=1800).step_by(200).map(|m| m as f64).collect(),
            ExperimentKind::NoiseCurve => (1..=6).map(|i| i as f64 / 10.0).collect(),
        };
        Self {
            kind,
            n: 3000,
            block_len: 1,
            k_true: 30,
            k_hat: None,
            m: 1600,
            m_ratio: 30,
            sigma2: 0.0,
            grid,
            trials: 100,
            base_seed: 1,
            algorithms: vec![Algorithm::Craf, Algorithm::Sparta],
            craf: CrafParams::default(),
            sparta: SpartaParams::default(),
            success_threshold: 1e-5,
            workers: 0,
            keep_raw: false,
        }
    }

    /// Parses flat `key = value` text on top of the preset named by its
    /// `experiment` key (or `default_kind` when the key is absent).
    pub fn from_kv_text(text: &str, default_kind: ExperimentKind) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let kind = match pairs.iter().rev().find(|(k, _)| k == "experiment") {
            Some((_, v)) => v.parse()?,
            None => default_kind,
        };
        let mut cfg = Self::preset(kind);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Sets one documented key. Keys match the config-file names listed in
    /// the README; `B` is accepted as an alias for `block_len`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "experiment" => {
                let kind: ExperimentKind = v.parse()?;
                if kind != self.kind {
                    return Err(Error::Config(format!("experiment `{kind}` conflicts with `{}`", self.kind)));
                }
            }
            "n" => self.n = parse(key, v)?,
            "B" | "block_len" => self.block_len = parse(key, v)?,
            "k" | "k_true" => self.k_true = parse(key, v)?,
            "k_hat" => self.k_hat = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "m" => self.m = parse(key, v)?,
            "m_ratio" => self.m_ratio = parse(key, v)?,
            "sigma2" => self.sigma2 = parse(key, v)?,
            "grid" => self.grid = parse_grid(v)?,
            "trials" => self.trials = parse(key, v)?,
            "seed" => self.base_seed = parse(key, v)?,
            "algorithms" => {
                self.algorithms =
                    v.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "mu" => self.craf.mu = parse(key, v)?,
            "beta" => self.craf.beta = Beta::Constant(parse(key, v)?),
            "tau_w" => self.craf.tau_w = parse(key, v)?,
            "lambda_minus" => self.craf.init.lambda_minus = parse(key, v)?,
            "lambda_plus" => self.craf.init.lambda_plus = parse(key, v)?,
            "tau1" => self.craf.init.tau1 = parse(key, v)?,
            "tau2" => self.craf.init.tau2 = parse(key, v)?,
            "max_iters" => {
                let t = parse(key, v)?;
                self.craf.max_iters = t;
                self.sparta.max_iters = t;
            }
            "early_stop_tol" => {
                let t = parse(key, v)?;
                self.craf.early_stop_tol = t;
                self.sparta.early_stop_tol = t;
            }
            "tau_g" => self.sparta.tau_g = parse(key, v)?,
            "sparta_mu" => self.sparta.mu = parse(key, v)?,
            "init_fraction" => self.sparta.init_fraction = parse(key, v)?,
            "success_threshold" => self.success_threshold = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "raw" => self.keep_raw = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn effective_k_hat(&self) -> usize {
        self.k_hat.unwrap_or(self.k_true)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.block_len == 0 || self.n == 0 || !self.n.is_multiple_of(self.block_len) {
            return bad(format!("n = {} must be a positive multiple of B = {}", self.n, self.block_len));
        }
        let num_blocks = self.n / self.block_len;
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|g| !g.is_finite()) {
            return bad("grid must be finite and strictly increasing".into());
        }
        if self.trials == 0 {
            return bad("need at least one trial".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        if !(self.success_threshold > 0.0) {
            return bad("success threshold must be positive".into());
        }
        let check_k = |k: usize, what: &str| {
            if k == 0 || k > num_blocks {
                bad(format!("{what} = {k} must satisfy 1 <= {what} and {what}*B <= n"))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::InitBench => {
                for &g in &self.grid {
                    check_k(integral(g, "k grid")?, "k")?;
                }
                if self.m_ratio == 0 {
                    return bad("m_ratio must be positive".into());
                }
            }
            ExperimentKind::SuccessCurve => {
                for &g in &self.grid {
                    if integral(g, "m grid")? == 0 {
                        return bad("m grid values must be positive".into());
                    }
                }
                check_k(self.k_true, "k")?;
                check_k(self.effective_k_hat(), "k_hat")?;
            }
            ExperimentKind::NoiseCurve => {
                if self.grid.iter().any(|&g| g < 0.0) {
                    return bad("noise variances must be >= 0".into());
                }
                if self.m == 0 {
                    return bad("m must be positive".into());
                }
                check_k(self.k_true, "k")?;
                check_k(self.effective_k_hat(), "k_hat")?;
            }
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 = {} must be finite and >= 0", self.sigma2));
        }
        self.craf.validate(1).or_else(|e| match (&self.craf.beta, e) {
            // Per-sample beta lengths are checked against m at solve time.
            (Beta::PerSample(_), Error::Parameter(_)) => Ok(()),
            (_, e) => Err(e),
        })?;
        self.sparta.validate()
    }

    /// Concrete dimensions at each grid index.
    pub fn points(&self) -> Vec<GridPoint> {
        self.grid
            .iter()
            .map(|&g| match self.kind {
                ExperimentKind::InitBench => {
                    let k = g as usize;
                    GridPoint { value: g, m: self.m_ratio * k, k_true: k, k_hat: k, sigma2: self.sigma2 }
                }
                ExperimentKind::SuccessCurve => GridPoint {
                    value: g,
                    m: g as usize,
                    k_true: self.k_true,
                    k_hat: self.effective_k_hat(),
                    sigma2: self.sigma2,
                },
                ExperimentKind::NoiseCurve => {
                    GridPoint { value: g, m: self.m, k_true: self.k_true, k_hat: self.effective_k_hat(), sigma2: g }
                }
            })
            .collect()
    }
}

fn integral(g: f64, what: &str) -> Result<usize> {
    if g >= 0.0 && g.fract() == 0.0 {
        Ok(g as usize)
    } else {
        Err(Error::Config(format!("{what} value {g} is not a nonnegative integer")))
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{v}` for `{key}`"))),
    }
}

/// Grids are comma lists; an item `a:step:b` expands to `a, a+step, ..., <= b`.
pub fn parse_grid(v: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse::<f64>("grid", single)?),
            [start, step, stop] => {
                let (a, s, b): (f64, f64, f64) = (parse("grid", start)?, parse("grid", step)?, parse("grid", stop)?);
                if !(s > 0.0) {
                    return Err(Error::Config(format!("grid step in `{item}` must be positive")));
                }
                let count = ((b - a) / s + 1e-9).floor();
                if count < 0.0 {
                    return Err(Error::Config(format!("empty grid range `{item}`")));
                }
                // a + i*s rounds; snap to 12 significant digits so 0.1:0.1:0.6 stays tidy.
                for i in 0..=count as usize {
                    let v = a + i as f64 * s;
                    out.push(format!("{v:.12e}").parse().expect("formatted float"));
                }
            }
            _ => return Err(Error::Config(format!("bad grid item `{item}`"))),
        }
    }
    Ok(out)
}

fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    /// The swept value as written in the grid.
    pub value: f64,
    pub m: usize,
    pub k_true: usize,
    pub k_hat: usize,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub point: usize,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub iterations: usize,
    pub success: bool,
    /// Informational only; not covered by determinism.
    pub ms: f64,
    pub init: InitDiagnostics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSummary {
    pub point: GridPoint,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_rel_error: f64,
    pub mean_iters: f64,
    pub mean_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Grid-point-major, then in `config.algorithms` order.
    pub summaries: Vec<PointSummary>,
    pub raw: Option<Vec<TrialRow>>,
}

impl ExperimentResult {
    pub fn summary(&self, point: usize, algorithm: Algorithm) -> Option<&PointSummary> {
        let per_point = self.config.algorithms.len();
        self.summaries[point * per_point..(point + 1) * per_point].iter().find(|s| s.algorithm == algorithm)
    }

    /// Per-grid-point values of `f` for one algorithm.
    pub fn series(&self, algorithm: Algorithm, f: impl Fn(&PointSummary) -> f64) -> Vec<f64> {
        self.summaries.iter().filter(|s| s.algorithm == algorithm).map(f).collect()
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Instance seed for a grid value and trial index.
pub fn trial_seed(base_seed: u64, grid_value: f64, trial: usize) -> u64 {
    base_seed ^ mix64(mix64(grid_value.to_bits()) ^ trial as u64)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let points = config.points();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..config.trials).map(move |t| (p, t))).collect();

    let run = || -> Result<Vec<TrialRow>> {
        let per_job: Vec<Vec<TrialRow>> =
            jobs.par_iter().map(|&(p, t)| run_trial(config, p, &points[p], t)).collect::<Result<_>>()?;
        Ok(per_job.into_iter().flatten().collect())
    };
    let rows = if config.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(run)?
    };

    let summaries = summarize(config, &points, &rows);
    Ok(ExperimentResult { config: config.clone(), summaries, raw: config.keep_raw.then_some(rows) })
}

/// Runs solvers with `k_hat` on instances generated with `k_true < k_hat`;
/// success is still judged against the true signal.
pub fn misspecified_k_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    match config.k_hat {
        Some(k_hat) if k_hat > config.k_true => run_experiment(config),
        _ => Err(Error::Config(format!("misspecified-k experiment needs k_hat > k_true = {}", config.k_true))),
    }
}

fn run_trial(config: &ExperimentConfig, p: usize, point: &GridPoint, trial: usize) -> Result<Vec<TrialRow>> {
    let seed = trial_seed(config.base_seed, point.value, trial);
    let blocks = BlockStructure::for_dimension(config.n, config.block_len)?;
    let mut rng = RngStream::new(seed);
    let inst = generate_instance(config.n, point.m, point.k_true, blocks, point.sigma2.sqrt(), &mut rng)?;
    let truth = Some(inst.signal());

    config
        .algorithms
        .iter()
        .map(|&alg| {
            let start = Instant::now();
            let (z, iterations, init) = match (config.kind, alg) {
                (ExperimentKind::InitBench, Algorithm::Craf) => {
                    let i = initialize_detailed(&inst, point.k_hat, &config.craf.init, truth)?;
                    (i.estimate.z, 0, i.diagnostics)
                }
                (ExperimentKind::InitBench, Algorithm::Sparta) => {
                    let i = sparta_initialize_detailed(&inst, point.k_hat, config.sparta.init_fraction, truth)?;
                    (i.estimate.z, 0, i.diagnostics)
                }
                (_, Algorithm::Craf) => {
                    let tr = craf_solve(&inst, point.k_hat, &config.craf, truth)?;
                    (tr.estimate.z, tr.iterations, tr.init.expect("full solve records init"))
                }
                (_, Algorithm::Sparta) => {
                    let tr = sparta_solve(&inst, point.k_hat, &config.sparta, truth)?;
                    (tr.estimate.z, tr.iterations, tr.init.expect("full solve records init"))
                }
            };
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let err = rel_error(&z, inst.signal());
            Ok(TrialRow {
                point: p,
                algorithm: alg,
                trial,
                seed,
                rel_error: err,
                iterations,
                success: err < config.success_threshold,
                ms,
                init,
            })
        })
        .collect()
}

fn summarize(config: &ExperimentConfig, points: &[GridPoint], rows: &[TrialRow]) -> Vec<PointSummary> {
    let mut out = Vec::with_capacity(points.len() * config.algorithms.len());
    for (p, point) in points.iter().enumerate() {
        for &alg in &config.algorithms {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.point == p && r.algorithm == alg).collect();
            let count = mine.len() as f64;
            let mean = |f: &dyn Fn(&TrialRow) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / count;
            out.push(PointSummary {
                point: *point,
                algorithm: alg,
                trials: mine.len(),
                success_rate: mean(&|r| r.success as u8 as f64),
                mean_rel_error: mean(&|r| r.rel_error),
                mean_iters: mean(&|r| r.iterations as f64),
                mean_ms: mean(&|r| r.ms),
            });
        }
    }
    out
}

pub const SUMMARY_HEADER: &str =
    "experiment,algorithm,n,m,B,k_true,k_hat,sigma2,trials,success_rate,mean_rel_error,mean_iters,mean_ms";

pub const RAW_HEADER: &str = "experiment,algorithm,n,m,B,k_true,k_hat,sigma2,trial,seed,rel_error,iters,success,ms,\
r_hat,lower_count,upper_count,eig1,eig2,support_overlap";

/// One row per grid point and algorithm.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    let c = &result.config;
    writeln!(w, "{SUMMARY_HEADER}")?;
    for s in &result.summaries {
        let p = &s.point;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            c.kind,
            s.algorithm,
            c.n,
            p.m,
            c.block_len,
            p.k_true,
            p.k_hat,
            p.sigma2,
            s.trials,
            s.success_rate,
            s.mean_rel_error,
            s.mean_iters,
            s.mean_ms
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One row per trial and algorithm, including initialization diagnostics.
pub fn write_raw_csv<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    let c = &result.config;
    let points = c.points();
    writeln!(w, "{RAW_HEADER}")?;
    for r in result.raw.iter().flatten() {
        let p = &points[r.point];
        let d = &r.init;
        let overlap = d.support_overlap.map(|o| o.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{},{},{},{},{},{}",
            c.kind,
            r.algorithm,
            c.n,
            p.m,
            c.block_len,
            p.k_true,
            p.k_hat,
            p.sigma2,
            r.trial,
            r.seed,
            r.rel_error,
            r.iterations,
            r.success as u8,
            r.ms,
            d.r_hat,
            d.lower_count,
            d.upper_count,
            d.top_eigenvalues[0],
            d.top_eigenvalues[1],
            overlap
        )?;
    }
    w.flush()?;
    Ok(())
}
