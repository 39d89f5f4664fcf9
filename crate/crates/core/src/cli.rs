//! Command-line front end for the harness.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gradlite::error_feedback::Probe;
use gradlite::harness::{
    ablation_suite, format_float, grad_check_suite, memory_report, rate_check, run_experiment,
    write_metrics_csv, AblationConfig, OptimizerSpec, ProblemSpec, RateConfig, DEFAULT_ETA_GRID,
};
use gradlite::jacobian_approx::BasisMode;
use gradlite::optimizer::{AdamConfig, EfMode, GaloreConfig, GradLiteConfig};
use gradlite::problems::DatasetKind;
use gradlite::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DIVERGED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_GRAD_CHECK: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "gradlite",
    version,
    about = "Low-rank Jacobian optimizer with error feedback: experiments and checks"
)]
pub struct Cli {
    /// Flat key=value file (`#` comments); command-line flags override it [default: none]
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one optimizer on one problem and write per-step metrics
    Run(RunArgs),
    /// Compare full GradLite against its two ablations
    Ablate(AblateArgs),
    /// Fit the convergence rate of the averaged iterate on a noisy quadratic
    RateCheck(RateArgs),
    /// Check gradients against the chain rule and finite differences
    GradCheck(GradCheckArgs),
    /// Print exact scalar-count memory accounting
    MemReport(MemArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptKind {
    Sgd,
    Adam,
    Galore,
    Gradlite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EfArg {
    Paper,
    EfStandard,
    Off,
}

impl From<EfArg> for EfMode {
    fn from(a: EfArg) -> Self {
        match a {
            EfArg::Paper => EfMode::Paper,
            EfArg::EfStandard => EfMode::EfStandard,
            EfArg::Off => EfMode::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProbeArg {
    Exact,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    Svd,
    RandomProjection,
}

impl From<BasisArg> for BasisMode {
    fn from(a: BasisArg) -> Self {
        match a {
            BasisArg::Svd => BasisMode::Svd,
            BasisArg::RandomProjection => BasisMode::RandomProjection,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DatasetArg {
    GaussianLogistic,
    LowRankRegression,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "quadratic")]
    pub problem: ProblemKind,
    /// Quadratic dimension, logistic feature count, or MLP input width
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    /// Quadratic condition number
    #[arg(long, default_value_t = 100.0)]
    pub cond: f64,
    /// Quadratic error-signal noise scale
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Samples for logistic and MLP problems
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "low-rank-regression")]
    pub dataset: DatasetArg,
    /// Logistic ridge coefficient
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    /// MLP hidden widths, comma separated
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value = "gradlite")]
    pub opt: OptKind,
    /// Step size
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Rank of the Jacobian factor (gradlite) or gradient basis (galore)
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Refresh period in steps
    #[arg(long, default_value_t = 10)]
    pub tau: usize,
    #[arg(long, value_enum, default_value = "ef-standard")]
    pub ef_mode: EfArg,
    #[arg(long, value_enum, default_value = "exact")]
    pub probe: ProbeArg,
    #[arg(long, value_enum, default_value = "svd")]
    pub basis: BasisArg,
    /// Subspace iterations of the randomized SVD
    #[arg(long, default_value_t = 6)]
    pub power_iters: usize,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Seeds the problem instance, the noise and the random bases
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-step metrics CSV
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
    /// Run summary JSON
    #[arg(long, default_value = "summary.json")]
    pub summary: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Auto,
    Fixed(f64),
}

fn parse_eta(s: &str) -> Result<EtaChoice, String> {
    if s == "auto" {
        return Ok(EtaChoice::Auto);
    }
    s.parse::<f64>()
        .map(EtaChoice::Fixed)
        .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct AblateArgs {
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub tau: usize,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    /// Step size, or `auto` to tune on the full method over a fixed grid
    #[arg(long, value_parser = parse_eta, default_value = "auto")]
    pub eta: EtaChoice,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 6)]
    pub power_iters: usize,
    /// Ablation table CSV
    #[arg(long, default_value = "ablation.csv")]
    pub out: PathBuf,
    #[arg(long, default_value = "ablation.json")]
    pub summary: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RateArgs {
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 100.0)]
    pub cond: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub tau: usize,
    #[arg(long, value_enum, default_value = "ef-standard")]
    pub ef_mode: EfArg,
    #[arg(long, value_enum, default_value = "svd")]
    pub basis: BasisArg,
    #[arg(long, default_value_t = 6)]
    pub power_iters: usize,
    /// Step-size constant: η = c/√T
    #[arg(long, default_value_t = 0.15)]
    pub c: f64,
    #[arg(long, value_delimiter = ',', default_value = "400,1600,6400,25600")]
    pub t_grid: Vec<usize>,
    /// Number of noise seeds per horizon
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-horizon gaps CSV
    #[arg(long, default_value = "rate.csv")]
    pub out: PathBuf,
    #[arg(long, default_value = "rate.json")]
    pub summary: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-check report CSV
    #[arg(long, default_value = "gradcheck.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct MemArgs {
    /// Error-signal length
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Parameter count
    #[arg(long, default_value_t = 200)]
    pub d: usize,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub tau: usize,
    #[arg(long, value_enum, default_value = "ef-standard")]
    pub ef_mode: EfArg,
    /// Memory table CSV
    #[arg(long, default_value = "memory.csv")]
    pub out: PathBuf,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::Diverged { .. } => EXIT_DIVERGED,
            Error::Config(_)
            | Error::Rank { .. }
            | Error::Spd(_)
            | Error::Data(_)
            | Error::UnknownOptimum => EXIT_CONFIG,
            _ => EXIT_DIVERGED,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

/// Splits `--config` out of `argv` and splices the file's entries in as
/// flags ahead of the command-line ones, so the command line wins.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    if let Some(prog) = iter.next() {
        rest.push(prog);
    }
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy().into_owned();
        if text == "--config" {
            match iter.next() {
                Some(path) => config = Some(PathBuf::from(path)),
                // leave it for clap to report
                None => rest.push(arg),
            }
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };

    let sub_pos = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1);
    let Some(sub_pos) = sub_pos else {
        return Ok(rest);
    };
    let sub = rest[sub_pos].to_string_lossy().into_owned();
    let command = Cli::command();
    let Some(sub_cmd) = command.find_subcommand(&sub) else {
        return Ok(rest);
    };
    let known: BTreeSet<String> = sub_cmd
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "config")
        .collect();

    let entries = read_config(&path)?;
    let mut spliced = Vec::with_capacity(rest.len() + 2 * entries.len());
    spliced.extend(rest[..=sub_pos].iter().cloned());
    for (key, value) in entries {
        if !known.contains(&key) {
            return Err(config_failure(format!(
                "unknown key `{key}` in {} for `{sub}`",
                path.display()
            )));
        }
        spliced.push(format!("--{key}").into());
        spliced.push(value.into());
    }
    spliced.extend(rest[sub_pos + 1..].iter().cloned());
    Ok(spliced)
}

fn read_config(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::io(path, e)))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            config_failure(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::from(Error::io(path, e)))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable summary");
    out.push(b'\n');
    out
}

impl RunArgs {
    fn problem_spec(&self) -> ProblemSpec {
        match self.problem {
            ProblemKind::Quadratic => ProblemSpec::Quadratic {
                dim: self.dim,
                cond: self.cond,
                noise: self.noise,
            },
            ProblemKind::Logistic => ProblemSpec::Logistic {
                n: self.n,
                dim: self.dim,
                dataset: match self.dataset {
                    DatasetArg::GaussianLogistic => DatasetKind::GaussianLogistic,
                    DatasetArg::LowRankRegression => DatasetKind::LowRankRegression,
                },
                l2: self.l2,
            },
            ProblemKind::Mlp => {
                let mut widths = vec![self.dim];
                widths.extend(&self.hidden);
                widths.push(1);
                ProblemSpec::Mlp { widths, n: self.n }
            }
        }
    }

    fn optimizer_spec(&self) -> OptimizerSpec {
        match self.opt {
            OptKind::Sgd => OptimizerSpec::Sgd { eta: self.eta },
            OptKind::Adam => OptimizerSpec::Adam(AdamConfig {
                eta: self.eta,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            }),
            OptKind::Galore => OptimizerSpec::Galore(GaloreConfig {
                eta: self.eta,
                k: self.k,
                tau: self.tau,
                seed: self.seed,
                power_iters: self.power_iters,
            }),
            OptKind::Gradlite => OptimizerSpec::GradLite(GradLiteConfig {
                eta: self.eta,
                k: self.k,
                tau: self.tau,
                ef_mode: self.ef_mode.into(),
                probe: match self.probe {
                    ProbeArg::Exact => Probe::Exact,
                    ProbeArg::None => Probe::None,
                },
                basis: self.basis.into(),
                seed: self.seed,
                power_iters: self.power_iters,
            }),
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    command: &'static str,
    problem: &'a ProblemSpec,
    optimizer: &'a OptimizerSpec,
    steps: usize,
    seed: u64,
    steps_completed: usize,
    final_loss: f64,
    final_gap: f64,
    diverged: bool,
    divergence: Option<&'a gradlite::harness::Divergence>,
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let problem = args.problem_spec();
    let opt = args.optimizer_spec();
    let metrics = run_experiment(&problem, &opt, args.steps, args.seed)?;
    let mut csv = Vec::new();
    write_metrics_csv(&metrics, &mut csv).expect("in-memory write");
    write_file(&args.out, &csv)?;
    let summary = RunSummary {
        command: "run",
        problem: &problem,
        optimizer: &opt,
        steps: args.steps,
        seed: args.seed,
        steps_completed: metrics.steps_completed,
        final_loss: metrics.final_loss,
        final_gap: metrics.final_gap,
        diverged: metrics.diverged.is_some(),
        divergence: metrics.diverged.as_ref(),
    };
    write_file(&args.summary, &to_json(&summary))?;
    eprintln!("wall time {:.3}s", metrics.wall_time_secs);
    println!(
        "steps={} final_loss={} final_gap={}",
        metrics.steps_completed,
        format_float(metrics.final_loss),
        format_float(metrics.final_gap)
    );
    match &metrics.diverged {
        Some(d) => {
            eprintln!("diverged at step {}: {}", d.step, d.reason);
            Ok(EXIT_DIVERGED)
        }
        None => Ok(EXIT_OK),
    }
}

#[derive(Serialize)]
struct AblationSummary<'a> {
    command: &'static str,
    config: &'a AblationConfig,
    table: &'a gradlite::harness::AblationTable,
    full_wins_every_seed: bool,
}

fn cmd_ablate(args: &AblateArgs) -> Result<u8, Failure> {
    let cfg = AblationConfig {
        n: args.n,
        dim: args.dim,
        l2: args.l2,
        k: args.k,
        tau: args.tau,
        steps: args.steps,
        eta: match args.eta {
            EtaChoice::Auto => None,
            EtaChoice::Fixed(e) => Some(e),
        },
        eta_grid: DEFAULT_ETA_GRID.to_vec(),
        seeds: args.seeds.clone(),
        power_iters: args.power_iters,
    };
    let table = ablation_suite(&cfg)?;
    let csv = table.to_csv();
    write_file(&args.out, csv.as_bytes())?;
    let wins = table.seeds().iter().all(|&s| table.full_wins(s));
    write_file(
        &args.summary,
        &to_json(&AblationSummary {
            command: "ablate",
            config: &cfg,
            table: &table,
            full_wins_every_seed: wins,
        }),
    )?;
    println!("eta={}", format_float(table.eta));
    print!("{csv}");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RateSummary<'a> {
    command: &'static str,
    config: &'a RateConfig,
    fit: &'a gradlite::harness::RateFit,
}

fn cmd_rate(args: &RateArgs) -> Result<u8, Failure> {
    let cfg = RateConfig {
        dim: args.dim,
        cond: args.cond,
        noise: args.noise,
        k: args.k,
        tau: args.tau,
        ef_mode: args.ef_mode.into(),
        basis: args.basis.into(),
        power_iters: args.power_iters,
        c: args.c,
        t_grid: args.t_grid.clone(),
        seeds: args.seeds,
        seed: args.seed,
    };
    let fit = rate_check(&cfg)?;
    let mut csv = String::from("steps,eta,mean_gap");
    for s in 0..cfg.seeds {
        let _ = write!(csv, ",gap_seed{s}");
    }
    csv.push('\n');
    for p in &fit.points {
        let _ = write!(
            csv,
            "{},{},{}",
            p.steps,
            format_float(p.eta),
            format_float(p.mean_gap)
        );
        for g in &p.seed_gaps {
            let _ = write!(csv, ",{}", format_float(*g));
        }
        csv.push('\n');
    }
    write_file(&args.out, csv.as_bytes())?;
    write_file(
        &args.summary,
        &to_json(&RateSummary {
            command: "rate-check",
            config: &cfg,
            fit: &fit,
        }),
    )?;
    println!(
        "slope={} error_floor={} r_squared={}",
        format_float(fit.slope),
        format_float(fit.error_floor),
        format_float(fit.r_squared)
    );
    Ok(EXIT_OK)
}

fn cmd_grad_check(args: &GradCheckArgs) -> Result<u8, Failure> {
    let report = grad_check_suite(args.seed)?;
    write_file(&args.out, report.to_csv().as_bytes())?;
    for r in &report.results {
        println!(
            "{} {} block={} max_error={} tol={}",
            if r.passed { "PASS" } else { "FAIL" },
            r.problem,
            r.block.map_or_else(|| "all".to_string(), |b| b.to_string()),
            format_float(r.max_error),
            format_float(r.tolerance)
        );
    }
    println!(
        "{} checks, {} failed",
        report.results.len(),
        report.failures().len()
    );
    Ok(if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_GRAD_CHECK
    })
}

fn cmd_mem(args: &MemArgs) -> Result<u8, Failure> {
    let methods = [
        OptimizerSpec::Sgd { eta: 1.0 },
        OptimizerSpec::Adam(AdamConfig::default()),
        OptimizerSpec::Galore(GaloreConfig {
            eta: 1.0,
            k: args.k,
            tau: args.tau,
            seed: 0,
            power_iters: 1,
        }),
        OptimizerSpec::GradLite(GradLiteConfig {
            k: args.k,
            tau: args.tau,
            ef_mode: args.ef_mode.into(),
            ..GradLiteConfig::default()
        }),
    ];
    let report = memory_report(args.m, args.d, &methods)?;
    let csv = report.to_csv();
    write_file(&args.out, csv.as_bytes())?;
    print!("{csv}");
    let g = report.get("gradlite").expect("gradlite row");
    let e = report.get("exact-sgd").expect("baseline row");
    println!(
        "backward signal: gradlite {} vs exact {} scalars/step",
        g.backward_signal, e.backward_signal
    );
    println!(
        "factor: {} scalars per refresh, {} amortized scalars/step",
        g.factor_per_refresh, g.factor_amortized
    );
    println!(
        "gradlite total is {:.1}% below exact backprop",
        100.0 * report.savings("gradlite", "exact-sgd").expect("both rows")
    );
    Ok(EXIT_OK)
}

pub fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::RateCheck(a) => cmd_rate(a),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::MemReport(a) => cmd_mem(a),
    }
}
