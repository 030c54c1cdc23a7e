//! The `uot` command-line interface.
//!
//! Every subcommand writes one JSON object to stdout (or `--out`) and a short
//! human summary to stderr. Exit codes: 0 success, 2 bad arguments, 3 solver
//! failure, 4 I/O error.

pub mod bench;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::divergence::{Divergence, Entropy};
use crate::error::{Error, Result};
use crate::flows::{barycenter_flow, run_flow, FlowConfig, FlowTarget, ParticleSystem};
use crate::io;
use crate::measure::{marginals, measure_cost, CostKind, DiscreteMeasure};
use crate::mmd::{mmd_sq, KernelSpec};
use crate::oracle;
use crate::sinkdiv::measure_divergence;
use crate::sinkhorn::{marginal_errors, plan_from_potentials, sinkhorn_solve, Annealing, SoftminMode, SolveOptions};
use crate::ti::ti_sinkhorn_solve;
use crate::ugw::{ugw_solve, MetricMeasureSpace, UgwInit, UgwOptions, UgwPenalty};

use bench::{bench_mode_masses, ModeMassBench};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARGS: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "uot", version, about = "Unbalanced optimal transport toolkit")]
struct Cli {
    /// Seed for randomized components (UGW restarts, random flow initializations).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for UGW restarts and rho sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Entropic (unbalanced) transport between two measures.
    Solve(SolveArgs),
    /// Sinkhorn divergence, debiased by default.
    Divergence(DivergenceArgs),
    /// Squared maximum mean discrepancy.
    Mmd(MmdArgs),
    /// Unbalanced Gromov-Wasserstein between two metric measure spaces.
    Ugw(UgwArgs),
    /// Particle gradient flow described by a JSON file.
    Flow(FlowArgs),
    /// Exact reference solvers.
    Oracle(OracleArgs),
    /// Mode-mass experiment on two 1-D Gaussian mixtures.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DivName {
    Balanced,
    Kl,
    Tv,
    Range,
    Power,
    Berg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Sinkhorn,
    Ti,
}

/// Solver parameters shared by `solve` and `divergence`; the JSON form of `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub cost: CostKind,
    pub entropy: Entropy,
    pub eps: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub algorithm: Algorithm,
    pub mode: SoftminMode,
    pub annealing: Option<Annealing>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self {
            cost: CostKind::SqEuclidean,
            entropy: Entropy::Kl { rho: 1.0 },
            eps: o.epsilon,
            tol: o.tol,
            max_iters: o.max_iters,
            algorithm: Algorithm::Sinkhorn,
            mode: o.mode,
            annealing: None,
        }
    }
}

impl SolverConfig {
    fn options(&self) -> SolveOptions {
        let mut o = SolveOptions::with_epsilon(self.eps).tol(self.tol).max_iters(self.max_iters);
        o.mode = self.mode;
        o.annealing = self.annealing;
        o
    }
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// JSON file with solver parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sqeuclid, euclid, power:<p> or wfr:<cutoff>.
    #[arg(long)]
    cost: Option<String>,
    #[arg(long, value_enum)]
    div: Option<DivName>,
    #[arg(long)]
    rho: Option<f64>,
    /// Lower bound for the range entropy.
    #[arg(long)]
    range_a: Option<f64>,
    /// Upper bound for the range entropy.
    #[arg(long)]
    range_b: Option<f64>,
    /// Exponent of the power entropy.
    #[arg(long)]
    power_s: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long)]
    beta: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Write the transport plan as a headerless CSV.
    #[arg(long)]
    plan_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DivergenceArgs {
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long)]
    beta: PathBuf,
    /// Report the debiased divergence (default).
    #[arg(long, conflicts_with = "raw")]
    debiased: bool,
    /// Report the raw entropic cost OT_eps(alpha, beta) instead.
    #[arg(long)]
    raw: bool,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelName {
    Gaussian,
    Laplacian,
    Energy,
}

#[derive(Debug, Args)]
struct MmdArgs {
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long)]
    beta: PathBuf,
    /// JSON kernel specification; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: Option<KernelName>,
    /// Bandwidth of the Gaussian or Laplacian kernel.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct UgwArgs {
    /// Distance matrix of X (headerless CSV).
    #[arg(long)]
    dx: PathBuf,
    /// Weights of X (headerless CSV vector).
    #[arg(long)]
    wa: PathBuf,
    #[arg(long)]
    dy: PathBuf,
    #[arg(long)]
    wb: PathBuf,
    /// JSON solver options; flags override them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    /// Exact marginal constraints instead of the KL penalty.
    #[arg(long, conflicts_with = "rho")]
    balanced: bool,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    exponent: Option<u32>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitName>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    plan_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitName {
    Product,
    Histogram,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for `snap_{iter}.csv` and `trace.csv`; overrides the config.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(subcommand)]
    kind: OracleKind,
}

#[derive(Debug, Subcommand)]
enum OracleKind {
    /// Exact balanced OT by the transportation simplex.
    Lp(OracleMeasures),
    /// Exact unbalanced OT with TV penalties.
    Tv {
        #[command(flatten)]
        measures: OracleMeasures,
        #[arg(long)]
        rho: f64,
    },
    /// Balanced OT between 1-D measures by sorting.
    Ot1d(OracleMeasures),
    /// Closed-form KL-UOT between two Diracs at distance d.
    TwoDiracs {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        rho: f64,
    },
}

#[derive(Debug, Args)]
struct OracleMeasures {
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long)]
    beta: PathBuf,
    #[arg(long, default_value = "sqeuclid")]
    cost: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// JSON bench parameters; flags override them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated list of rho values.
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
}

/// Initial particles of a flow file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    /// A measure CSV; particles start at its atoms with `r = √w`.
    File { path: PathBuf },
    /// Uniform positions in the unit cube, equal masses, seeded by `seed`.
    Random { n: usize, dim: usize, mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub path: PathBuf,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// JSON form of `flow --config`. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFile {
    #[serde(flatten)]
    pub config: FlowConfig,
    pub initial: InitialSpec,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Parses `sqeuclid`, `euclid`, `power:<p>` or `wfr:<cutoff>`.
pub fn parse_cost(s: &str) -> Result<CostKind> {
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number in cost {s:?}")));
    match s.split_once(':') {
        None if s == "sqeuclid" => Ok(CostKind::SqEuclidean),
        None if s == "euclid" => Ok(CostKind::EuclideanPower { p: 1.0 }),
        Some(("power", p)) => Ok(CostKind::EuclideanPower { p: num(p)? }),
        Some(("wfr", c)) => Ok(CostKind::Wfr { cutoff: num(c)? }),
        _ => Err(bad(format!("unknown cost {s:?}; expected sqeuclid, euclid, power:<p> or wfr:<cutoff>"))),
    }
}

fn entropy_rho(e: &Entropy) -> Option<f64> {
    match *e {
        Entropy::Kl { rho } | Entropy::Tv { rho } | Entropy::Berg { rho } | Entropy::Power { rho, .. } => Some(rho),
        _ => None,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
}

fn solver_config(flags: &SolverFlags) -> Result<SolverConfig> {
    let mut cfg: SolverConfig = match &flags.config {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(c) = &flags.cost {
        cfg.cost = parse_cost(c)?;
    }
    let rho = flags.rho.or(entropy_rho(&cfg.entropy)).unwrap_or(1.0);
    cfg.entropy = match flags.div {
        Some(DivName::Balanced) => Entropy::Balanced,
        Some(DivName::Kl) => Entropy::Kl { rho },
        Some(DivName::Tv) => Entropy::Tv { rho },
        Some(DivName::Berg) => Entropy::Berg { rho },
        Some(DivName::Power) => Entropy::Power {
            s: flags.power_s.ok_or_else(|| bad("--div power needs --power-s"))?,
            rho,
        },
        Some(DivName::Range) => Entropy::Range {
            a: flags.range_a.ok_or_else(|| bad("--div range needs --range-a"))?,
            b: flags.range_b.ok_or_else(|| bad("--div range needs --range-b"))?,
        },
        None => match (cfg.entropy, flags.rho) {
            (Entropy::Kl { .. }, Some(r)) => Entropy::Kl { rho: r },
            (Entropy::Tv { .. }, Some(r)) => Entropy::Tv { rho: r },
            (Entropy::Berg { .. }, Some(r)) => Entropy::Berg { rho: r },
            (Entropy::Power { s, .. }, Some(r)) => Entropy::Power { s, rho: r },
            (e, _) => e,
        },
    };
    if let Some(v) = flags.eps {
        cfg.eps = v;
    }
    if let Some(v) = flags.tol {
        cfg.tol = v;
    }
    if let Some(v) = flags.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = flags.algorithm {
        cfg.algorithm = v;
    }
    cfg.entropy.validate()?;
    cfg.options().validate()?;
    if cfg.algorithm == Algorithm::Ti && !matches!(cfg.entropy, Entropy::Kl { .. }) {
        return Err(bad("the ti algorithm needs a kl penalty"));
    }
    Ok(cfg)
}

/// A parsed report: the JSON object and a one-line summary.
struct Outcome {
    report: Value,
    summary: String,
    /// Set when the solver ran but did not reach its tolerance.
    failed: bool,
}

fn cmd_solve(a: &SolveArgs) -> Result<Outcome> {
    let cfg = solver_config(&a.solver)?;
    let (alpha, beta) = (io::load_measure(&a.alpha)?, io::load_measure(&a.beta)?);
    let cost = measure_cost(&alpha, &beta, cfg.cost)?;
    let d = Divergence::new(cfg.entropy)?;
    let opts = cfg.options();
    let (pot, rep) = match cfg.algorithm {
        Algorithm::Sinkhorn => sinkhorn_solve(alpha.weights(), beta.weights(), cost.view(), &d, &d, &opts)?,
        Algorithm::Ti => ti_sinkhorn_solve(alpha.weights(), beta.weights(), cost.view(), &d, &d, &opts)?,
    };
    let plan = plan_from_potentials(&pot.f, &pot.g, cost.view(), cfg.eps, alpha.weights(), beta.weights());
    if let Some(p) = &a.plan_out {
        io::save_matrix(plan.matrix(), p)?;
    }
    let (e1, e2) = marginal_errors(&plan, alpha.weights(), beta.weights());
    let summary = format!(
        "solve: primal {:.6e}, dual {:.6e}, gap {:.2e}, {} iterations{}",
        rep.primal,
        rep.dual,
        rep.gap,
        rep.iterations,
        if rep.converged { "" } else { " (not converged)" }
    );
    Ok(Outcome {
        report: json!({
            "command": "solve",
            "config": cfg,
            "primal": rep.primal,
            "dual": rep.dual,
            "gap": rep.gap,
            "iterations": rep.iterations,
            "last_update": rep.last_update_sup_norm,
            "converged": rep.converged,
            "plan_mass": plan.mass(),
            "marginal_errors": [e1, e2],
        }),
        summary,
        failed: !rep.converged,
    })
}

fn cmd_divergence(a: &DivergenceArgs) -> Result<Outcome> {
    let cfg = solver_config(&a.solver)?;
    if cfg.algorithm == Algorithm::Ti {
        return Err(bad("divergence uses the standard Sinkhorn solver"));
    }
    let (alpha, beta) = (io::load_measure(&a.alpha)?, io::load_measure(&a.beta)?);
    let d = Divergence::new(cfg.entropy)?;
    let t = measure_divergence(&alpha, &beta, cfg.cost, &d, &cfg.options())?;
    let (kind, value) = if a.raw { ("raw", t.cross) } else { ("debiased", t.value) };
    Ok(Outcome {
        report: json!({
            "command": "divergence",
            "config": cfg,
            "kind": kind,
            "value": value,
            "cross": t.cross,
            "self_alpha": t.self_alpha,
            "self_beta": t.self_beta,
            "mass_term": t.mass_term,
            "iterations": {
                "cross": t.cross_iterations,
                "self_alpha": t.f_alpha.iterations,
                "self_beta": t.g_beta.iterations,
            },
        }),
        summary: format!("divergence ({kind}): {value:.6e}"),
        failed: false,
    })
}

fn cmd_mmd(a: &MmdArgs) -> Result<Outcome> {
    let mut spec: KernelSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => KernelSpec::Gaussian { sigma: 1.0 },
    };
    let width = |s: &KernelSpec| match *s {
        KernelSpec::Gaussian { sigma } => sigma,
        KernelSpec::Laplacian { s } => s,
        KernelSpec::EnergyDistance => 1.0,
    };
    let sigma = a.sigma.unwrap_or(width(&spec));
    spec = match (a.kernel, spec) {
        (Some(KernelName::Gaussian), _) | (None, KernelSpec::Gaussian { .. }) => KernelSpec::Gaussian { sigma },
        (Some(KernelName::Laplacian), _) | (None, KernelSpec::Laplacian { .. }) => KernelSpec::Laplacian { s: sigma },
        (Some(KernelName::Energy), _) | (None, KernelSpec::EnergyDistance) => KernelSpec::EnergyDistance,
    };
    spec.validate()?;
    let (alpha, beta) = (io::load_measure(&a.alpha)?, io::load_measure(&a.beta)?);
    let v = mmd_sq(&alpha, &beta, spec)?;
    Ok(Outcome {
        report: json!({ "command": "mmd", "kernel": spec, "mmd_sq": v, "mmd": v.max(0.0).sqrt() }),
        summary: format!("mmd^2: {v:.6e}"),
        failed: false,
    })
}

fn cmd_ugw(a: &UgwArgs, seed: Option<u64>, parallel: bool) -> Result<Outcome> {
    let mut opts: UgwOptions = match &a.config {
        Some(p) => read_json(p)?,
        None => UgwOptions::default(),
    };
    if a.balanced {
        opts.penalty = UgwPenalty::Balanced;
    } else if let Some(rho) = a.rho {
        opts.penalty = UgwPenalty::Kl { rho };
    }
    if let Some(v) = a.eps {
        opts.eps = v;
    }
    if let Some(v) = a.exponent {
        opts.exponent = v;
    }
    if let Some(v) = a.restarts {
        opts.restarts = v;
    }
    if let Some(v) = a.tol {
        opts.tol = v;
    }
    if let Some(v) = a.max_iters {
        opts.max_iters = v;
    }
    match a.init {
        Some(InitName::Product) => opts.init = UgwInit::Product,
        Some(InitName::Histogram) => opts.init = UgwInit::Histogram,
        None => {}
    }
    if let Some(s) = seed {
        opts.seed = s;
    }
    opts.parallel = parallel;
    let x = MetricMeasureSpace::new(io::load_matrix(&a.dx)?, io::load_vector(&a.wa)?)?;
    let y = MetricMeasureSpace::new(io::load_matrix(&a.dy)?, io::load_vector(&a.wb)?)?;
    let (pi, _, rep) = ugw_solve(&x, &y, &opts)?;
    if let Some(p) = &a.plan_out {
        io::save_matrix(pi.matrix(), p)?;
    }
    let (p1, p2) = marginals(&pi);
    opts.parallel = false;
    Ok(Outcome {
        summary: format!(
            "ugw: functional {:.6e}, distortion {:.3e}, mass {:.4}, {} iterations{}",
            rep.functional,
            rep.distortion,
            rep.mass,
            rep.iterations,
            if rep.converged { "" } else { " (not converged)" }
        ),
        failed: !rep.converged,
        report: json!({
            "command": "ugw",
            "options": opts,
            "report": rep,
            "marginals": [p1, p2],
        }),
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cmd_flow(a: &FlowArgs, seed: Option<u64>) -> Result<Outcome> {
    let file: FlowFile = read_json(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let mut cfg = file.config.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    let initial = match &file.initial {
        InitialSpec::File { path } => ParticleSystem::from_measure(&io::load_measure(&resolve(base, path))?),
        InitialSpec::Random { n, dim, mass } => ParticleSystem::random_uniform(*n, *dim, *mass, cfg.seed)?,
    };
    let targets = file
        .targets
        .iter()
        .map(|t| io::load_measure(&resolve(base, &t.path)))
        .collect::<Result<Vec<DiscreteMeasure>>>()?;
    let omegas: Vec<f64> = file.targets.iter().map(|t| t.weight).collect();
    let traj = if targets.len() == 1 {
        cfg.targets = vec![FlowTarget {
            measure: targets[0].clone(),
            weight: omegas[0],
        }];
        run_flow(&initial, &cfg)?
    } else {
        barycenter_flow(&initial, &targets, &omegas, &cfg)?
    };
    let dir = a.snapshots.clone().or_else(|| file.output_dir.as_ref().map(|d| resolve(base, d)));
    if let Some(d) = &dir {
        io::save_trajectory(&traj, d)?;
    }
    let fin = traj.final_system().measure();
    Ok(Outcome {
        summary: format!(
            "flow: loss {:.6e} -> {:.6e} over {} iterations",
            traj.trace[0].loss,
            traj.final_loss(),
            cfg.iterations
        ),
        failed: false,
        report: json!({
            "command": "flow",
            "config": cfg,
            "trace": traj.trace,
            "final_loss": traj.final_loss(),
            "final_mass": fin.mass(),
            "halvings": traj.halvings,
            "snapshots": traj.snapshots.iter().map(|s| s.iteration).collect::<Vec<_>>(),
            "output_dir": dir,
        }),
    })
}

fn cmd_oracle(a: &OracleArgs) -> Result<Outcome> {
    let load = |m: &OracleMeasures| -> Result<(DiscreteMeasure, DiscreteMeasure, CostKind)> {
        Ok((io::load_measure(&m.alpha)?, io::load_measure(&m.beta)?, parse_cost(&m.cost)?))
    };
    let (kind, value) = match &a.kind {
        OracleKind::Lp(m) => {
            let (x, y, c) = load(m)?;
            let cost = measure_cost(&x, &y, c)?;
            ("lp", oracle::lp_ot_exact(x.weights(), y.weights(), cost.view())?.0)
        }
        OracleKind::Tv { measures, rho } => {
            let (x, y, c) = load(measures)?;
            let cost = measure_cost(&x, &y, c)?;
            ("tv", oracle::uot_tv_exact(x.weights(), y.weights(), cost.view(), *rho)?)
        }
        OracleKind::Ot1d(m) => {
            let (x, y, c) = load(m)?;
            if x.dim() != 1 || y.dim() != 1 {
                return Err(bad("ot1d needs one-dimensional measures"));
            }
            let xs: Vec<f64> = x.points().iter().cloned().collect();
            let ys: Vec<f64> = y.points().iter().cloned().collect();
            ("ot1d", oracle::ot_1d_sorted(&xs, x.weights(), &ys, y.weights(), c)?)
        }
        OracleKind::TwoDiracs { a, b, d, rho } => {
            if !(*a >= 0.0 && *b >= 0.0 && *d >= 0.0 && *rho > 0.0) {
                return Err(bad("two-diracs needs a, b, d >= 0 and rho > 0"));
            }
            ("two_diracs", oracle::uot_kl_two_diracs(*a, *b, *d, *rho))
        }
    };
    Ok(Outcome {
        report: json!({ "command": "oracle", "kind": kind, "value": value }),
        summary: format!("oracle {kind}: {value:.9e}"),
        failed: false,
    })
}

fn cmd_bench(a: &BenchArgs, parallel: bool) -> Result<Outcome> {
    let mut cfg: ModeMassBench = match &a.config {
        Some(p) => read_json(p)?,
        None => ModeMassBench::default(),
    };
    if let Some(v) = a.grid {
        cfg.grid = v;
    }
    if let Some(v) = a.eps {
        cfg.eps = v;
    }
    if let Some(v) = &a.rhos {
        cfg.rhos = v.clone();
    }
    let rep = bench_mode_masses(&cfg, parallel)?;
    let mut summary = String::from("bench mode masses:");
    for r in &rep.rows {
        summary.push_str(&format!(
            "\n  rho {:>8}: mismatch {:.2e}, marginal l1 {:.2e}, plan mass {:.4}",
            r.rho, r.mode_mismatch, r.marginal_l1, r.plan_mass
        ));
    }
    Ok(Outcome {
        failed: rep.rows.iter().any(|r| !r.converged),
        report: json!({ "command": "bench", "config": cfg, "report": rep }),
        summary,
    })
}

/// Maps a library error to an exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_io() => EXIT_IO,
        Error::NotConverged { .. }
        | Error::MassCollapse(_)
        | Error::RangeInfeasible(..)
        | Error::KernelUnderflow(_)
        | Error::MassMismatch(..)
        | Error::ZeroMass => EXIT_SOLVER,
        _ => EXIT_ARGS,
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let parallel = cli.jobs > 1;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Divergence(a) => cmd_divergence(a),
        Command::Mmd(a) => cmd_mmd(a),
        Command::Ugw(a) => cmd_ugw(a, cli.seed, parallel),
        Command::Flow(a) => cmd_flow(a, cli.seed),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a, parallel),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ARGS } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    if cli.jobs == 0 {
        let _ = writeln!(err, "error: --jobs must be at least 1");
        return EXIT_ARGS;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ARGS;
        }
    };
    let outcome = match pool.install(|| dispatch(&cli)) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize") + "\n";
    let written = match &cli.out {
        Some(p) => std::fs::write(p, &text),
        None => out.write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_IO;
    }
    let _ = writeln!(err, "{}", outcome.summary);
    if outcome.failed {
        EXIT_SOLVER
    } else {
        EXIT_OK
    }
}
