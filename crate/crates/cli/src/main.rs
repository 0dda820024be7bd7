//! `archmp` command-line tool.
//!
//! Data documents (TOML) go to stdout or the files named by flags; progress
//! and errors go to stderr. Exit codes: 0 success, 1 domain failure
//! (infeasible problem, failed check, invalid architecture), 2 usage error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use archmp::catalog::{self, CatalogError};
use archmp::format::{self, network_to_toml, parse_network, FormatError};
use archmp::metrics::{self, default_alphas, MetricReport};
use archmp::solver::{self, ProblemError, ProblemSpec, SolveError, SolveOptions, SolveReport};
use archmp::variance::{self, SimulationConfig, WeightMode};
use archmp::{Conventions, NetworkSpec};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "archmp", about = "Entropy-maximizing CNN architecture design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Metrics of one architecture (file path or catalog name).
    Analyze(AnalyzeArgs),
    /// Solve a design problem.
    Solve(SolveArgs),
    /// Side-by-side metrics of two architectures.
    Compare(CompareArgs),
    /// Monte-Carlo check of the MLP output-variance law.
    VerifyVariance(VarianceArgs),
    /// List the reference networks, or print one.
    Catalog(CatalogArgs),
    /// Sweep counting conventions against the reference networks.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Architecture file or catalog name.
    arch: String,
    /// Per-stage entropy weights (default: 1 everywhere, 8 on the last stage).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ignore unknown keys in the input.
    #[arg(long)]
    allow_unknown: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SolveOptions::default().restarts)]
    restarts: u64,
    /// Total evaluation budget across restarts.
    #[arg(long, default_value_t = SolveOptions::default().max_evals)]
    max_evals: u64,
    /// Write the solved architecture here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the metric report of the solution here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include per-restart bests in the summary.
    #[arg(long)]
    trace: bool,
    /// Worker threads for the restarts (0 = all cores).
    #[arg(long, env = "ARCHMP_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    allow_unknown: bool,
}

#[derive(Args)]
struct CompareArgs {
    a: String,
    b: String,
    /// Entropy weights applied to both (defaults per network).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    allow_unknown: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Annealed,
    Quenched,
}

#[derive(Args)]
struct VarianceArgs {
    /// Layer widths, e.g. 16,32.
    #[arg(long, value_delimiter = ',', required = true)]
    widths: Vec<u32>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Acceptance band in standard errors.
    #[arg(long, default_value_t = 5.0)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = Mode::Annealed)]
    mode: Mode,
}

#[derive(Args)]
struct CatalogArgs {
    /// Print this entry's architecture file.
    name: Option<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Write the markdown table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors caused by how the tool was invoked rather than by the data.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Domain failure that has already been reported on stdout.
#[derive(Debug)]
struct Reported(String);

impl fmt::Display for Reported {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Reported {}

fn read_input(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(usage(format!("{} is empty", path.display())));
    }
    Ok(text)
}

fn load_network(arg: &str, allow_unknown: bool) -> Result<NetworkSpec> {
    let path = Path::new(arg);
    let net = if path.exists() {
        let text = read_input(path)?;
        parse_network(&text, allow_unknown).with_context(|| format!("parsing {arg}"))?
    } else {
        match catalog::reference(arg) {
            Ok(entry) => entry.spec,
            Err(CatalogError::Unknown(_)) => {
                return Err(usage(format!(
                    "{arg}: no such file or catalog entry (catalog: {})",
                    catalog::NAMES.join(", ")
                )))
            }
            Err(e) => return Err(e.into()),
        }
    };
    let violations = net.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(anyhow!("{arg}: invalid architecture: {}", list.join("; ")));
    }
    Ok(net)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn report_for(net: &NetworkSpec, alphas: Option<&[f64]>) -> Result<MetricReport> {
    let alphas = alphas.map(<[f64]>::to_vec).unwrap_or_else(|| default_alphas(net.stages.len()));
    Ok(metrics::analyze(net, &alphas, &Conventions::CALIBRATED)?)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let net = load_network(&args.arch, args.allow_unknown)?;
    let report = report_for(&net, args.alphas.as_deref())?;
    emit(&format::to_toml(&report)?, args.out.as_deref())
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    problem: &'a str,
    seed: u64,
    conventions: String,
    #[serde(flatten)]
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct InfeasibleSummary<'a> {
    problem: &'a str,
    seed: u64,
    feasible: bool,
    #[serde(flatten)]
    report: &'a solver::InfeasibilityReport,
}

fn solve(args: SolveArgs) -> Result<()> {
    let text = read_input(&args.problem)?;
    let prob = match ProblemSpec::from_toml(&text, args.allow_unknown) {
        Ok(p) => p,
        Err(ProblemError::Format(FormatError::Empty)) => return Err(usage("empty problem file")),
        Err(e) => return Err(anyhow::Error::from(e).context(format!("parsing {}", args.problem.display()))),
    };
    if args.max_evals == 0 {
        return Err(usage("--max-evals must be at least 1"));
    }
    let opts = SolveOptions {
        seed: args.seed,
        restarts: args.restarts,
        max_evals: args.max_evals,
        trace: args.trace,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    eprintln!(
        "solving {} ({} stages, {} restarts, {} evaluations max)",
        prob.name, prob.num_stages, opts.restarts, opts.max_evals
    );
    let report = match pool.install(|| solver::solve(&prob, &opts)) {
        Ok(r) => r,
        Err(SolveError::Infeasible(inf)) => {
            let summary = InfeasibleSummary {
                problem: &prob.name,
                seed: args.seed,
                feasible: false,
                report: &inf,
            };
            print!("{}", format::to_toml(&summary)?);
            return Err(Reported(inf.to_string()).into());
        }
        Err(e) => return Err(e.into()),
    };
    let net = solver::realize(&report.best, &prob)?;
    if let Some(path) = &args.out {
        emit(&network_to_toml(&net)?, Some(path))?;
    }
    if let Some(path) = &args.report {
        let metrics = metrics::analyze(&net, &prob.alphas, &prob.conventions)?;
        emit(&format::to_toml(&metrics)?, Some(path))?;
    }
    let summary = SolveSummary {
        problem: &prob.name,
        seed: args.seed,
        conventions: prob.conventions.fingerprint(),
        report: &report,
    };
    print!("{}", format::to_toml(&summary)?);
    eprintln!(
        "{} evaluations in {:.2}s{}",
        report.evaluations,
        report.wall_time.as_secs_f64(),
        if report.budget_exhausted { " (budget exhausted)" } else { "" }
    );
    if !report.feasible {
        return Err(Reported("evaluation budget exhausted before a feasible point was found".into()).into());
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let a = load_network(&args.a, args.allow_unknown)?;
    let b = load_network(&args.b, args.allow_unknown)?;
    let ra = report_for(&a, args.alphas.as_deref())?;
    let rb = report_for(&b, args.alphas.as_deref())?;
    let rows: [(&str, f64, f64); 9] = [
        ("weighted_entropy", ra.weighted_entropy, rb.weighted_entropy),
        ("rho", ra.rho, rb.rho),
        ("q", ra.q, rb.q),
        ("params", ra.params as f64, rb.params as f64),
        ("flops", ra.flops as f64, rb.flops as f64),
        ("average_width", ra.average_width, rb.average_width),
        ("entropy_layers", ra.entropy_layers as f64, rb.entropy_layers as f64),
        ("stages", ra.stages as f64, rb.stages as f64),
        ("monotone", ra.monotone as u8 as f64, rb.monotone as u8 as f64),
    ];
    println!("{:<18} {:>18} {:>18} {:>18}", "metric", &args.a, &args.b, "delta");
    for (name, x, y) in rows {
        println!("{name:<18} {:>18} {:>18} {:>18}", fmt_num(x), fmt_num(y), fmt_num(y - x));
    }
    Ok(())
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

fn verify_variance(args: VarianceArgs) -> Result<()> {
    let cfg = SimulationConfig {
        widths: args.widths,
        n_samples: args.samples,
        seed: args.seed,
        tolerance: args.tolerance,
        mode: match args.mode {
            Mode::Annealed => WeightMode::Annealed,
            Mode::Quenched => WeightMode::Quenched,
        },
    };
    let report = variance::verify(&cfg)?;
    print!("{}", format::to_toml(&report)?);
    match report.passed() {
        Some(false) => Err(Reported("variance law check failed".into()).into()),
        Some(true) => Ok(()),
        None => {
            eprintln!("report only: checks are asserted for annealed weights, depth <= 4 and n >= 1000");
            Ok(())
        }
    }
}

fn show_catalog(args: CatalogArgs) -> Result<()> {
    if let Some(name) = args.name {
        let text = catalog::source_text(&name).map_err(|e| usage(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    println!("{:<16} {:>12} {:>14} {:>6}  source", "name", "params", "flops", "rho");
    for entry in catalog::all() {
        let e = &entry.expected;
        println!(
            "{:<16} {:>12} {:>14} {:>6}  {}",
            entry.name, e.params, e.flops, e.rho, e.source
        );
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let report = catalog::calibrate();
    emit(&report.to_markdown(), args.out.as_deref())?;
    if !report.passed() {
        return Err(Reported("no convention set reproduces every reference network".into()).into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::VerifyVariance(a) => verify_variance(a),
        Command::Catalog(a) => show_catalog(a),
        Command::Calibrate(a) => calibrate(a),
    }
}

fn main() -> ExitCode {
    let version: &'static str = Box::leak(
        format!(
            "{} (conventions {})",
            env!("CARGO_PKG_VERSION"),
            Conventions::CALIBRATED.fingerprint()
        )
        .into_boxed_str(),
    );
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
