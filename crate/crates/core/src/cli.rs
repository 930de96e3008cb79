//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when a run completes but misses its target
//! (recovery threshold or a failed check), 1 on any error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::harness::{
    misspecified_k_experiment, run_experiment, write_raw_csv, write_summary_csv, Algorithm, ExperimentConfig,
    ExperimentKind,
};
use crate::model::{generate_instance, read_instance, write_instance, write_instance_csv, BlockStructure};
use crate::numerics::RngStream;
use crate::refine::{craf_solve, sparta_solve, write_trace_csv, CrafParams, SolveTrace, SpartaParams};
use crate::verify::{self, CheckOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MISSED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "craf",
    version,
    about = "Sparse phase retrieval: CRAF solver, SPARTA baseline and Monte Carlo benchmarks"
)]
pub struct Cli {
    /// Increase diagnostics on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or load) one instance and recover it.
    Solve(SolveArgs),
    /// Initialization error of CRAF vs SPARTA over a k-grid with m = ratio * k.
    InitBench(ExperimentArgs),
    /// Success rate versus the number of measurements m.
    SuccessCurve(ExperimentArgs),
    /// Relative error versus the noise variance at fixed m.
    NoiseCurve(ExperimentArgs),
    /// Run the self-check battery.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgArg {
    Craf,
    Sparta,
}

/// Solver tunables shared by every subcommand that runs a solver.
#[derive(Debug, Default, Args)]
pub struct SolverFlags {
    /// CRAF step size [default: 1]
    #[arg(long)]
    pub mu: Option<f64>,
    /// CRAF weighting parameter beta_i, same for every sample [default: 0.6]
    #[arg(long)]
    pub beta: Option<f64>,
    /// CRAF weight floor [default: 0.1]
    #[arg(long = "tau-w")]
    pub tau_w: Option<f64>,
    /// Spectral weight of small-magnitude samples [default: -3]
    #[arg(long = "lambda-minus", allow_hyphen_values = true)]
    pub lambda_minus: Option<f64>,
    /// Spectral weight of large-magnitude samples [default: 1]
    #[arg(long = "lambda-plus", allow_hyphen_values = true)]
    pub lambda_plus: Option<f64>,
    /// Lower split threshold, as a fraction of the squared norm estimate [default: 0.5]
    #[arg(long)]
    pub tau1: Option<f64>,
    /// Upper split threshold, as a fraction of the squared norm estimate [default: 0.5]
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Maximum iterations T for both solvers [default: 1000]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Relative-change early-stop tolerance, 0 disables [default: 1e-14]
    #[arg(long)]
    pub tol: Option<f64>,
    /// SPARTA truncation threshold; 0 gives plain hard-thresholded gradient descent [default: 0.7]
    #[arg(long = "tau-g")]
    pub tau_g: Option<f64>,
    /// SPARTA step size [default: 1]
    #[arg(long = "sparta-mu")]
    pub sparta_mu: Option<f64>,
    /// Share of samples kept by the SPARTA initializer [default: 0.1666…]
    #[arg(long = "init-fraction")]
    pub init_fraction: Option<f64>,
}

impl SolverFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("mu", self.mu.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("tau_w", self.tau_w.map(|v| v.to_string()));
        push("lambda_minus", self.lambda_minus.map(|v| v.to_string()));
        push("lambda_plus", self.lambda_plus.map(|v| v.to_string()));
        push("tau1", self.tau1.map(|v| v.to_string()));
        push("tau2", self.tau2.map(|v| v.to_string()));
        push("max_iters", self.iters.map(|v| v.to_string()));
        push("early_stop_tol", self.tol.map(|v| v.to_string()));
        push("tau_g", self.tau_g.map(|v| v.to_string()));
        push("sparta_mu", self.sparta_mu.map(|v| v.to_string()));
        push("init_fraction", self.init_fraction.map(|v| v.to_string()));
        out
    }

    fn params(&self) -> Result<(CrafParams, SpartaParams)> {
        let mut holder = ExperimentConfig::preset(ExperimentKind::SuccessCurve);
        for (k, v) in self.pairs() {
            holder.set(k, &v)?;
        }
        Ok((holder.craf, holder.sparta))
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Signal dimension
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Number of magnitude measurements
    #[arg(long, default_value_t = 1800)]
    pub m: usize,
    /// Block sparsity of the generated signal
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Sparsity passed to the solver [default: k]
    #[arg(long = "k-hat")]
    pub k_hat: Option<usize>,
    /// Block length
    #[arg(long = "B", alias = "block-len", default_value_t = 1)]
    pub block_len: usize,
    /// Additive noise variance sigma^2
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AlgArg::Craf)]
    pub alg: AlgArg,
    /// Relative error below which the run counts as a recovery
    #[arg(long = "success-threshold", default_value_t = 1e-5)]
    pub success_threshold: f64,
    /// Solve a saved binary instance instead of generating one
    #[arg(long, conflicts_with_all = ["n", "m", "k", "block_len", "sigma2", "seed"])]
    pub instance: Option<PathBuf>,
    /// Write the generated instance in binary form
    #[arg(long = "save-instance")]
    pub save_instance: Option<PathBuf>,
    /// Write x and psi as CSV
    #[arg(long = "instance-csv")]
    pub instance_csv: Option<PathBuf>,
    /// Write the per-iteration trace CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Flat `key = value` config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Signal dimension [default: 3000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Block length [default: 1]
    #[arg(long = "B", alias = "block-len")]
    pub block_len: Option<usize>,
    /// True block sparsity [default: 30]
    #[arg(long)]
    pub k: Option<usize>,
    /// Sparsity handed to the solvers [default: k]
    #[arg(long = "k-hat")]
    pub k_hat: Option<usize>,
    /// Measurements for noise-curve [default: 1600]
    #[arg(long)]
    pub m: Option<usize>,
    /// m / k for init-bench [default: 30]
    #[arg(long = "m-ratio")]
    pub m_ratio: Option<usize>,
    /// Noise variance for init-bench and success-curve [default: 0]
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Sweep grid, comma list or start:step:stop [default: k 25:1:35 | m 400:200:1800 | sigma2 0.1:0.1:0.6]
    #[arg(long)]
    pub grid: Option<String>,
    /// Monte Carlo trials per grid point [default: 100]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated algorithms [default: craf,sparta]
    #[arg(long)]
    pub algs: Option<String>,
    /// Success threshold on the relative error [default: 1e-5]
    #[arg(long = "success-threshold")]
    pub success_threshold: Option<f64>,
    /// Worker threads, 0 = all cores [default: 0]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Summary CSV path [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-trial CSV path
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

impl ExperimentArgs {
    pub fn to_config(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let cfg = ExperimentConfig::from_kv_text(&text, kind)?;
                if cfg.kind != kind {
                    return Err(Error::Config(format!(
                        "{} describes a {} experiment, not {kind}",
                        path.display(),
                        cfg.kind
                    )));
                }
                cfg
            }
            None => ExperimentConfig::preset(kind),
        };
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        push("n", self.n.map(|v| v.to_string()));
        push("block_len", self.block_len.map(|v| v.to_string()));
        push("k", self.k.map(|v| v.to_string()));
        push("k_hat", self.k_hat.map(|v| v.to_string()));
        push("m", self.m.map(|v| v.to_string()));
        push("m_ratio", self.m_ratio.map(|v| v.to_string()));
        push("sigma2", self.sigma2.map(|v| v.to_string()));
        push("grid", self.grid.clone());
        push("trials", self.trials.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("algorithms", self.algs.clone());
        push("success_threshold", self.success_threshold.map(|v| v.to_string()));
        push("workers", self.workers.map(|v| v.to_string()));
        pairs.extend(self.solver.pairs());
        for (k, v) in pairs {
            cfg.set(k, &v)?;
        }
        if self.raw.is_some() {
            cfg.keep_raw = true;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckArg {
    All,
    Lemma1,
    Separation,
    Gradient,
    Hkb,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = CheckArg::All)]
    pub check: CheckArg,
    /// Threshold for the lemma1 check
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Normal draws for the lemma1 check
    #[arg(long, default_value_t = 10_000_000)]
    pub draws: usize,
    /// Block count for the hkb check
    #[arg(long, default_value_t = 6)]
    pub nb: usize,
    /// Kept blocks for the hkb check
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Random vectors per block length for the hkb check
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let v = cli.verbose;
    match &cli.command {
        Command::Solve(args) => cmd_solve(args, v),
        Command::InitBench(args) => cmd_experiment(args, ExperimentKind::InitBench, v),
        Command::SuccessCurve(args) => cmd_experiment(args, ExperimentKind::SuccessCurve, v),
        Command::NoiseCurve(args) => cmd_experiment(args, ExperimentKind::NoiseCurve, v),
        Command::Verify(args) => cmd_verify(args),
    }
}

pub fn cmd_solve(args: &SolveArgs, verbose: u8) -> Result<i32> {
    let (craf_params, sparta_params) = args.solver.params()?;
    let instance = match &args.instance {
        Some(path) => read_instance(BufReader::new(File::open(path)?))?,
        None => {
            if args.block_len == 0 || !args.n.is_multiple_of(args.block_len) {
                return Err(Error::Dimension(format!(
                    "n = {} is not a positive multiple of B = {}",
                    args.n, args.block_len
                )));
            }
            if !(args.sigma2 >= 0.0) {
                return Err(Error::Parameter(format!("sigma2 = {} must be >= 0", args.sigma2)));
            }
            let blocks = BlockStructure::for_dimension(args.n, args.block_len)?;
            let mut rng = RngStream::new(args.seed);
            generate_instance(args.n, args.m, args.k, blocks, args.sigma2.sqrt(), &mut rng)?
        }
    };
    if let Some(path) = &args.save_instance {
        write_instance(&instance, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.instance_csv {
        write_instance_csv(&instance, BufWriter::new(File::create(path)?))?;
    }
    let k_hat = args.k_hat.unwrap_or(instance.k());
    if verbose > 0 {
        eprintln!(
            "instance n={} m={} k={} B={} sigma={} seed={}; solving with k_hat={k_hat}",
            instance.n(),
            instance.m(),
            instance.k(),
            instance.blocks().block_len(),
            instance.noise_sigma(),
            instance.seed()
        );
    }
    let truth = Some(instance.signal());
    let trace: SolveTrace = match args.alg {
        AlgArg::Craf => craf_solve(&instance, k_hat, &craf_params, truth)?,
        AlgArg::Sparta => sparta_solve(&instance, k_hat, &sparta_params, truth)?,
    };
    if let Some(path) = &args.out {
        write_trace_csv(&trace, BufWriter::new(File::create(path)?))?;
    }
    let err = trace.final_rel_error().expect("truth supplied");
    let success = err < args.success_threshold;
    let alg = match args.alg {
        AlgArg::Craf => Algorithm::Craf,
        AlgArg::Sparta => Algorithm::Sparta,
    };
    println!(
        "algorithm={alg} rel_error={err:e} iterations={} early_stopped={} success={success}",
        trace.iterations, trace.early_stopped
    );
    Ok(if success { EXIT_OK } else { EXIT_MISSED })
}

pub fn cmd_experiment(args: &ExperimentArgs, kind: ExperimentKind, verbose: u8) -> Result<i32> {
    let cfg = args.to_config(kind)?;
    if verbose > 0 {
        eprintln!(
            "{kind}: n={} B={} k={} k_hat={} grid={:?} trials={} seed={}",
            cfg.n,
            cfg.block_len,
            cfg.k_true,
            cfg.effective_k_hat(),
            cfg.grid,
            cfg.trials,
            cfg.base_seed
        );
    }
    let result = if cfg.k_hat.is_some_and(|k| k > cfg.k_true) && kind != ExperimentKind::InitBench {
        misspecified_k_experiment(&cfg)?
    } else {
        run_experiment(&cfg)?
    };
    match &args.out {
        Some(path) => write_summary_csv(&result, BufWriter::new(File::create(path)?))?,
        None => write_summary_csv(&result, io::stdout().lock())?,
    }
    if let Some(path) = &args.raw {
        write_raw_csv(&result, BufWriter::new(File::create(path)?))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let outcomes: Vec<CheckOutcome> = match args.check {
        CheckArg::All => verify::default_battery(args.seed)?,
        CheckArg::Lemma1 => vec![verify::check_lemma1(args.tau, args.draws, args.seed)],
        CheckArg::Separation => vec![verify::check_separation(100, 5000, 50, args.seed)?],
        CheckArg::Gradient => vec![verify::check_gradient(20, args.seed)?],
        CheckArg::Hkb => vec![verify::check_hard_threshold(args.nb, args.k, args.cases, args.seed)?],
    };
    let mut out = io::stdout().lock();
    for o in &outcomes {
        writeln!(out, "{o}")?;
    }
    let all = outcomes.iter().all(|o| o.passed);
    writeln!(out, "{} / {} checks passed", outcomes.iter().filter(|o| o.passed).count(), outcomes.len())?;
    Ok(if all { EXIT_OK } else { EXIT_MISSED })
}
