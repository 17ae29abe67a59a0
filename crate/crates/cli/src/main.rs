//! `rankadmm`: train, benchmark and inspect rank-based classifiers.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for bad usage or
//! parameter values.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use rankadmm::admm::{sigma_min, TheoryParams};
use rankadmm::baselines::{sgd_solve, SgdConfig};
use rankadmm::data::{generate_synthetic, load_dataset, split, standardize, RawDataset, SyntheticSpec};
use rankadmm::harness::{run_benchmark, summary_csv, BenchmarkPlan, Framework};
use rankadmm::metrics::{accuracy, predict};
use rankadmm::oracle::{grid_dp, DEFAULT_GRID_STEP};
use rankadmm::trace::{write_timing_csv, write_trace_csv};
use rankadmm::weights::CptRule;
use rankadmm::{
    admm_solve, sadmm_solve, solve_z_subproblem, Error, IterationTrace, LossKind, RegularizerSpec,
    ResolvedWeights, ScheduleSpec, SolverConfig, WeightScheme,
};

#[derive(Parser)]
#[command(name = "rankadmm", version, about = "Rank-based loss minimisation by proximal ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write its iteration trace.
    Train(TrainArgs),
    /// Run a JSON benchmark plan.
    Benchmark(BenchmarkArgs),
    /// Print the rank weights σ for n samples as CSV.
    Weights(WeightsArgs),
    /// Solve one z-subproblem by PAVA and by the brute-force grid oracle.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameworkArg {
    Srm,
    Aorr,
    Ehrm,
}

impl From<FrameworkArg> for Framework {
    fn from(f: FrameworkArg) -> Self {
        match f {
            FrameworkArg::Srm => Framework::Srm,
            FrameworkArg::Aorr => Framework::Aorr,
            FrameworkArg::Ehrm => Framework::Ehrm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Logistic,
    Hinge,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => LossKind::Logistic,
            LossArg::Hinge => LossKind::Hinge,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SchemeArg {
    Erm,
    Superquantile,
    Extremile,
    Esrm,
    Aorr,
    Cpt,
    HumanAligned,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegArg {
    Zero,
    L2,
    L1,
    Mcp,
    Scad,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Weight family; defaults to the framework's choice.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Superquantile level in [0, 1).
    #[arg(long)]
    q: Option<f64>,
    /// AoRR: average the losses ranked m+1..k from the top.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Extremile order.
    #[arg(long, default_value_t = 2.0)]
    order: f64,
    /// ESRM risk aversion.
    #[arg(long, default_value_t = 1.0)]
    risk: f64,
    #[arg(long, default_value_t = 0.61)]
    cpt_gamma: f64,
    #[arg(long, default_value_t = 0.69)]
    cpt_delta: f64,
    /// CPT reference point on the margin scale.
    #[arg(long, default_value_t = rankadmm::weights::CPT_DEFAULT_THRESHOLD, allow_hyphen_values = true)]
    cpt_b: f64,
    #[arg(long, default_value_t = 0.4)]
    ha_a: f64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    ha_b: f64,
}

impl SchemeArgs {
    fn scheme(&self, framework: Option<Framework>) -> Result<WeightScheme, Failure> {
        let choice = match (self.scheme, framework) {
            (Some(s), _) => s,
            (None, _) if self.k.is_some() || self.m.is_some() => SchemeArg::Aorr,
            (None, _) if self.q.is_some() => SchemeArg::Superquantile,
            (None, Some(Framework::Aorr)) => SchemeArg::Aorr,
            (None, Some(Framework::Ehrm)) => SchemeArg::Cpt,
            (None, Some(Framework::Srm)) => SchemeArg::Superquantile,
            (None, None) => return Err(Failure::usage("--scheme is required")),
        };
        let scheme = match choice {
            SchemeArg::Erm => WeightScheme::Erm,
            SchemeArg::Superquantile => WeightScheme::Superquantile { q: self.q.unwrap_or(0.8) },
            SchemeArg::Extremile => WeightScheme::Extremile { order: self.order },
            SchemeArg::Esrm => WeightScheme::Esrm { risk: self.risk },
            SchemeArg::Aorr => match (self.k, self.m) {
                (Some(k), Some(m)) => WeightScheme::Aorr { k, m },
                _ => return Err(Failure::usage("the AoRR scheme needs both --k and --m")),
            },
            SchemeArg::Cpt => WeightScheme::CptValueDependent {
                gamma: self.cpt_gamma,
                delta: self.cpt_delta,
                threshold: self.cpt_b,
            },
            SchemeArg::HumanAligned => WeightScheme::HumanAligned {
                a: self.ha_a,
                b: self.ha_b,
            },
        };
        // resolving at a small size catches out-of-range parameters early
        if !matches!(scheme, WeightScheme::Aorr { .. }) {
            scheme.resolve(4).map_err(Failure::usage_from)?;
        }
        Ok(scheme)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// LIBSVM file, or CSV with header `y,f1..fd`. Without it a synthetic
    /// dataset is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 20)]
    features: usize,
    #[arg(long, default_value_t = 1.0)]
    class_sep: f64,
    #[arg(long, value_enum, default_value = "srm")]
    framework: FrameworkArg,
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossArg,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, value_enum, default_value = "l2")]
    reg: RegArg,
    /// Regularisation strength; defaults to the framework's value.
    #[arg(long)]
    mu: Option<f64>,
    /// MCP / SCAD shape parameter.
    #[arg(long)]
    theta: Option<f64>,
    /// `srm`, `aorr`, `ehrm` or `constant:<rho>`; defaults to the framework's.
    #[arg(long)]
    schedule: Option<String>,
    /// Proximal weight r.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// KKT surrogate target for early stopping.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the Moreau-smoothed solver.
    #[arg(long)]
    smooth: bool,
    /// Fixed γ = ε, ρ = C₁/ε, r = C₂/ε with the complexity constants; implies
    /// --smooth.
    #[arg(long)]
    theory_mode: bool,
    /// Use the minibatch subgradient baseline instead of ADMM.
    #[arg(long)]
    sgd: bool,
    #[arg(long, default_value_t = 1e-2)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Training fraction; the rest is held out.
    #[arg(long, default_value_t = 0.6)]
    train_fraction: f64,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value = "rankadmm-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Plan file (JSON).
    plan: PathBuf,
    #[arg(long, default_value = "rankadmm-bench")]
    out: PathBuf,
    /// Worker threads; overrides the plan's value.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    scheme: SchemeArgs,
}

#[derive(Args)]
struct OracleArgs {
    /// Comma-separated entries of m.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, value_enum, default_value = "hinge")]
    loss: LossArg,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    step: f64,
}

enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    fn usage_from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Weights(a) => weights(a),
        Command::Oracle(a) => oracle(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn csv_line(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn weights(a: WeightsArgs) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let scheme = a.scheme.scheme(None)?;
    match scheme.resolve(a.n).map_err(Failure::usage_from)? {
        ResolvedWeights::Constant { sigma, .. } => println!("{}", csv_line(&sigma)),
        ResolvedWeights::ValueDependent(CptRule { low, high, .. }) => {
            // first line: margins at or below the reference point
            println!("{}", csv_line(&low));
            println!("{}", csv_line(&high));
        }
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<(), Failure> {
    if !(a.rho > 0.0) {
        return Err(Failure::usage("--rho must be positive"));
    }
    if !(a.step > 0.0) {
        return Err(Failure::usage("--step must be positive"));
    }
    let scheme = a.scheme.scheme(None)?;
    let weights = scheme.resolve(a.values.len()).map_err(Failure::usage_from)?;
    let kind = LossKind::from(a.loss);
    let z = solve_z_subproblem(&a.values, &weights, a.rho, kind)?;
    let mut m_sorted = a.values.clone();
    m_sorted.sort_by(f64::total_cmp);
    let mut z_sorted = z.clone();
    z_sorted.sort_by(f64::total_cmp);
    let objective = |zs: &[f64]| -> f64 {
        zs.iter()
            .zip(&m_sorted)
            .enumerate()
            .map(|(i, (&v, &m))| weights.sigma_at(i, v) * kind.value(v) + 0.5 * a.rho * (v - m) * (v - m))
            .sum()
    };
    let grid = grid_dp(&m_sorted, &weights, a.rho, kind, a.step, None)?;
    println!("pava_objective,{}", objective(&z_sorted));
    println!("grid_objective,{}", grid.objective);
    println!("pava_z,{}", csv_line(&z));
    println!("grid_z_sorted,{}", csv_line(&grid.z_sorted));
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<(), Failure> {
    let mut plan = BenchmarkPlan::load(&a.plan).map_err(|e| match e {
        Error::Io(_) => Failure::Run(anyhow::Error::new(e).context(format!("reading {}", a.plan.display()))),
        other => Failure::usage_from(other),
    })?;
    if a.threads.is_some() {
        plan.threads = a.threads;
    }
    plan.validate().map_err(Failure::usage_from)?;
    let results = run_benchmark(&plan, &a.out)?;
    print!("{}", summary_csv(&results.summary));
    let failed = results.runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see {}", results.runs.len(), a.out.join("runs.json").display());
    }
    Ok(())
}

fn parse_schedule(text: &str) -> Result<ScheduleSpec, Failure> {
    let schedule = match text {
        "srm" => ScheduleSpec::srm(),
        "aorr" => ScheduleSpec::aorr(),
        "ehrm" => ScheduleSpec::ehrm(),
        other => match other.strip_prefix("constant:") {
            Some(rho) => ScheduleSpec::Constant {
                rho: rho.parse().map_err(|_| Failure::usage(format!("bad rho in schedule '{other}'")))?,
            },
            None => return Err(Failure::usage(format!("unknown schedule '{other}'"))),
        },
    };
    schedule.validate().map_err(Failure::usage_from)?;
    Ok(schedule)
}

fn regularizer(a: &TrainArgs, framework: Framework) -> Result<RegularizerSpec, Failure> {
    let mu = a.mu.unwrap_or(framework.default_mu());
    let spec = match a.reg {
        RegArg::Zero => RegularizerSpec::Zero,
        RegArg::L2 => RegularizerSpec::L2 { mu },
        RegArg::L1 => RegularizerSpec::L1 { mu },
        RegArg::Mcp => RegularizerSpec::Mcp {
            mu,
            theta: a.theta.unwrap_or(3.0),
        },
        RegArg::Scad => RegularizerSpec::Scad {
            mu,
            theta: a.theta.unwrap_or(3.7),
        },
    };
    spec.validate().map_err(Failure::usage_from)?;
    Ok(spec)
}

fn load(a: &TrainArgs) -> Result<RawDataset, Failure> {
    match &a.data {
        Some(path) => Ok(load_dataset(path).with_context(|| format!("loading {}", path.display()))?),
        None => {
            let spec = SyntheticSpec {
                class_sep: a.class_sep,
                ..SyntheticSpec::new(a.samples, a.features, a.seed)
            };
            spec.validate().map_err(Failure::usage_from)?;
            Ok(generate_synthetic(&spec)?)
        }
    }
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let framework = Framework::from(a.framework);
    let scheme = a.scheme.scheme(Some(framework))?;
    let reg = regularizer(&a, framework)?;
    if !(a.train_fraction > 0.0 && a.train_fraction <= 1.0) {
        return Err(Failure::usage("--train-fraction must lie in (0, 1]"));
    }
    if a.sgd && (a.smooth || a.theory_mode) {
        return Err(Failure::usage("--sgd cannot be combined with --smooth or --theory-mode"));
    }

    let data = load(&a)?;
    let fractions = if a.train_fraction < 1.0 {
        vec![a.train_fraction, 1.0 - a.train_fraction]
    } else {
        vec![1.0]
    };
    let mut parts = split(&data, &fractions, a.seed)?.into_iter();
    let train = parts.next().context("empty split")?;
    let test = parts.next().filter(|t| t.sample_count() > 0);
    let (train, test) = if a.no_standardize {
        (train, test)
    } else {
        let others: Vec<RawDataset> = test.into_iter().collect();
        let (train, rest) = standardize(&train, &others)?;
        (train, rest.into_iter().next())
    };
    let problem = train.problem(LossKind::from(a.loss), scheme, reg).map_err(|e| match e {
        Error::InvalidParameter(_) => Failure::usage_from(e),
        other => other.into(),
    })?;

    let (label, w, trace, stop) = if a.sgd {
        let cfg = SgdConfig {
            learning_rate: a.learning_rate,
            epochs: a.epochs,
            seed: a.seed,
            ..SgdConfig::default()
        };
        cfg.validate().map_err(Failure::usage_from)?;
        let res = sgd_solve(&problem, &cfg)?;
        ("sgd", res.w, res.trace, res.stop)
    } else {
        let mut cfg = if a.theory_mode {
            let sigma = sigma_min(&problem)?;
            let params = TheoryParams::new(a.eps, reg.weak_convexity(), sigma).map_err(Failure::usage_from)?;
            log::info!("theory mode: C1 = {:.3e}, C2 = {}, rho = {:.3e}, r = {:.3e}", params.c1, params.c2, params.rho, params.r);
            SolverConfig::theory_mode(a.eps, &params)
        } else {
            SolverConfig {
                schedule: match &a.schedule {
                    Some(s) => parse_schedule(s)?,
                    None => framework.default_schedule(),
                },
                stop_eps: a.eps,
                ..SolverConfig::default()
            }
        };
        cfg.max_iter = a.max_iter;
        cfg.seed = a.seed;
        if let Some(r) = a.r {
            cfg.r = r;
        }
        cfg.validate().map_err(Failure::usage_from)?;
        let smooth = a.smooth || a.theory_mode;
        let res = if smooth {
            sadmm_solve(&problem, &cfg)?
        } else {
            admm_solve(&problem, &cfg)?
        };
        (if smooth { "sadmm" } else { "admm" }, res.w, res.trace, res.stop)
    };

    let objective = problem.objective(&w)?;
    let train_acc = accuracy(&predict(&train.x, &w)?, &train.y)?;
    let test_acc = match &test {
        Some(t) => Some(accuracy(&predict(&t.x, &w)?, &t.y)?),
        None => None,
    };
    write_outputs(&a.out, &trace, &w)?;

    println!("solver       {label}");
    println!("iterations   {} ({stop:?})", trace.len());
    println!("objective    {objective:.10}");
    println!("train_acc    {train_acc:.4}");
    if let Some(acc) = test_acc {
        println!("test_acc     {acc:.4}");
    }
    println!("trace        {}", a.out.join("trace.csv").display());
    Ok(())
}

fn write_outputs(out: &Path, trace: &[IterationTrace], w: &[f64]) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace_csv(&out.join("trace.csv"), trace)?;
    write_timing_csv(&out.join("timing.csv"), trace)?;
    fs::write(out.join("weights.csv"), csv_line(w) + "\n")?;
    Ok(())
}
