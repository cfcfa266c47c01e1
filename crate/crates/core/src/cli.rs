//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::acceptance;
use crate::config::{position_with_constant, RunConfig};
use crate::envelope::{dderiv_value, value_bruteforce, CandidateFamily, EnvelopeJets};
use crate::error::{Error, Result};
use crate::example::{directional_derivative_example, value_closed_form_example};
use crate::feedback::{
    non_increasing_within, run_feedback, sweep_partitions, Partition, SimReport,
};
use crate::fractional::Position;
use crate::problem::Problem;
use crate::sensitivity::psi;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "fracfb",
    version,
    about = "Feedback synthesis for Caputo fractional optimal control"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Feedback runs for every (start, strategy, diameter); CSV plus JSON reports.
    Simulate(RunArgs),
    /// Partition sweeps, one CSV per (strategy, start).
    Sweep(RunArgs),
    /// Envelope directional derivative against a finite-difference quotient.
    Dderiv(PointArgs),
    /// Value at a position by every available route.
    Value(PointArgs),
    /// Runs the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Solver cells per motion.
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
    /// Finite-difference shift as a fraction of T − t.
    #[arg(long, value_name = "X")]
    delta: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Position time (overrides the first configured start).
    #[arg(long)]
    t: Option<f64>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w0: Option<Vec<f64>>,
    /// Constant Caputo derivative of the history, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    caputo: Option<Vec<f64>>,
    /// Direction, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    f: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Run only this criterion.
    #[arg(long, value_name = "ID")]
    criterion: Option<u8>,
    #[arg(long)]
    quiet: bool,
    #[arg(long, hide = true, value_name = "REL")]
    perturb_gamma: Option<f64>,
}

/// Failure tagged with its exit code.
struct Failure {
    code: i32,
    error: Error,
}

fn config_err(error: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

fn run_err(error: Error) -> Failure {
    let code = if error.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_CONFIG
    };
    Failure { code, error }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    configure_threads();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Dderiv(a) => cmd_dderiv(&a, out),
        Command::Value(a) => cmd_value(&a, out),
        Command::Selftest(a) => return cmd_selftest(&a, out, err),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.error);
            f.code
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("FRACFB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

const DEFAULT_CONFIG: &str = r#"{"problem": "example-g", "alpha": 0.5, "T": 1.0, "g": "one"}"#;

fn load(args: &RunArgs) -> std::result::Result<(RunConfig, Problem), Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(e.into()))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| config_err(Error::invalid(format!("{}: {e}", path.display()))))?
        }
        None => serde_json::from_str(DEFAULT_CONFIG).map_err(|e| config_err(e.into()))?,
    };
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(delta) = args.delta {
        config.delta = delta;
    }
    config.validate().map_err(config_err)?;
    let problem = config.problem().map_err(config_err)?;
    Ok((config, problem))
}

/// Formats with 12 significant digits, `.` decimal point.
pub fn fmt12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{exp}")
    }
}

fn opt12(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

fn file_label(strategy: &str) -> String {
    strategy
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

/// Reference value for ε: closed form for the example, else brute force when
/// enabled.
fn reference(config: &RunConfig, problem: &Problem, p: &Position) -> Result<Option<f64>> {
    if let Some(g) = problem.g {
        return value_closed_form_example(p, g).map(Some);
    }
    if config.pieces == 0 {
        return Ok(None);
    }
    Ok(Some(
        value_bruteforce(p, problem, config.pieces, config.steps)?.value,
    ))
}

fn write_json(path: &Path, report: &SimReport) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(file, report)?;
    Ok(())
}

struct RunRow {
    strategy: String,
    start: usize,
    report: SimReport,
    k: usize,
    wall_time_ms: f64,
}

fn cmd_simulate(args: &RunArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let (config, problem) = load(args)?;
    let dir = config.ensure_output().map_err(config_err)?.to_path_buf();
    let starts: Vec<Position> = (0..config.starts.len())
        .map(|i| config.start(i, &problem))
        .collect::<Result<_>>()
        .map_err(config_err)?;
    if let Some(i) = starts.iter().position(|p| !p.is_interior()) {
        return Err(config_err(Error::invalid(format!(
            "starts[{i}]: feedback needs t < T"
        ))));
    }
    let rhos: Vec<Option<f64>> = starts
        .iter()
        .map(|p| reference(&config, &problem, p))
        .collect::<Result<_>>()
        .map_err(run_err)?;
    let mut jobs = Vec::new();
    for (s, _) in starts.iter().enumerate() {
        for name in &config.strategies {
            for &diam in &config.diameters {
                jobs.push((s, name.clone(), diam));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(s, name, diam)| -> Result<RunRow> {
            let p = &starts[*s];
            let strategy = config.strategy(name, &problem)?;
            let partition = Partition::with_diameter(p.t(), p.horizon(), *diam)?;
            let k = partition.pieces();
            let spp = config.steps.div_ceil(k).max(1);
            let clock = Instant::now();
            let mut report = run_feedback(
                p,
                strategy.as_ref(),
                &partition,
                &problem,
                spp,
                config.final_control,
            )?;
            let wall_time_ms = clock.elapsed().as_secs_f64() * 1e3;
            if let Some(rho) = rhos[*s] {
                report = report.with_reference(rho);
            }
            Ok(RunRow {
                strategy: name.clone(),
                start: *s,
                report,
                k,
                wall_time_ms,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(run_err)?;

    let csv_path = dir.join("simulate.csv");
    let write = || -> Result<()> {
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record([
            "strategy",
            "start",
            "diam",
            "cost",
            "rho",
            "epsilon",
            "k",
            "wall_time_ms",
        ])?;
        for r in &rows {
            w.write_record([
                r.strategy.clone(),
                r.start.to_string(),
                fmt12(r.report.diam()),
                fmt12(r.report.cost),
                opt12(r.report.rho),
                opt12(r.report.epsilon),
                r.k.to_string(),
                fmt12(r.wall_time_ms),
            ])?;
            let name = format!(
                "run_{}_start{}_k{}.json",
                file_label(&r.strategy),
                r.start,
                r.k
            );
            write_json(&dir.join(name), &r.report)?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(config_err)?;
    if !args.quiet {
        for r in &rows {
            let _ = writeln!(
                out,
                "{:<12} start {} k {:>4}  cost {}  epsilon {}",
                r.strategy,
                r.start,
                r.k,
                fmt12(r.report.cost),
                opt12(r.report.epsilon)
            );
        }
        let _ = writeln!(out, "wrote {}", csv_path.display());
    }
    Ok(())
}

fn cmd_sweep(args: &RunArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let (config, problem) = load(args)?;
    let dir = config.ensure_output().map_err(config_err)?.to_path_buf();
    let mut diams = config.diameters.clone();
    diams.sort_by(|a, b| b.total_cmp(a));
    for s in 0..config.starts.len() {
        let p = config.start(s, &problem).map_err(config_err)?;
        if !p.is_interior() {
            return Err(config_err(Error::invalid(format!(
                "starts[{s}]: feedback needs t < T"
            ))));
        }
        let rho = reference(&config, &problem, &p).map_err(run_err)?;
        for name in &config.strategies {
            let strategy = config.strategy(name, &problem).map_err(config_err)?;
            let rows = sweep_partitions(&p, strategy.as_ref(), &problem, &diams, config.steps, rho)
                .map_err(run_err)?;
            let path = dir.join(format!("sweep_{}_start{}.csv", file_label(name), s));
            let write = || -> Result<()> {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["diam", "cost", "rho", "epsilon", "k", "wall_time_ms"])?;
                for (_, row) in &rows {
                    w.write_record([
                        fmt12(row.diam),
                        fmt12(row.cost),
                        opt12(row.rho),
                        opt12(row.epsilon),
                        row.k.to_string(),
                        fmt12(row.wall_time_ms),
                    ])?;
                }
                w.flush()?;
                Ok(())
            };
            write().map_err(config_err)?;
            if !args.quiet {
                let eps: Vec<f64> = rows.iter().filter_map(|(_, r)| r.epsilon).collect();
                let trend = if eps.len() == rows.len() {
                    if non_increasing_within(&eps, 0.2, 1e-9) {
                        "epsilon non-increasing"
                    } else {
                        "epsilon NOT non-increasing"
                    }
                } else {
                    "no reference value"
                };
                let _ = writeln!(out, "{name} start {s}: {trend}; wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn point(args: &PointArgs, config: &RunConfig, problem: &Problem) -> Result<Position> {
    if args.t.is_none() && args.w0.is_none() && args.caputo.is_none() {
        return config.start(0, problem);
    }
    let dim = problem.config.dim;
    let w0 = args
        .w0
        .clone()
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(dim));
    if w0.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "--w0",
            expected: dim,
            got: w0.len(),
        });
    }
    let t = args.t.unwrap_or(0.0);
    position_with_constant(problem.config, t, w0, args.caputo.clone(), 16)
}

fn family(config: &RunConfig, problem: &Problem, p: &Position) -> Result<CandidateFamily> {
    let family = CandidateFamily::constant_diracs(&problem.controls);
    if config.pieces == 0 || problem.g.is_some() {
        return Ok(family);
    }
    family.with_bruteforce(p, problem, config.pieces, config.steps)
}

fn envelope_value(
    p: &Position,
    family: &CandidateFamily,
    problem: &Problem,
    steps: usize,
) -> Result<f64> {
    family
        .members()
        .par_iter()
        .map(|nu| {
            psi(
                p,
                nu,
                &problem.dynamics,
                &problem.controls,
                &problem.cost,
                steps,
            )
        })
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))
}

fn cmd_dderiv(args: &PointArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let (config, problem) = load(&args.run)?;
    let p = point(args, &config, &problem).map_err(config_err)?;
    if !p.is_interior() {
        return Err(config_err(Error::invalid(format!(
            "dderiv needs t < T, got t = {} with T = {}",
            p.t(),
            p.horizon()
        ))));
    }
    let dim = problem.config.dim;
    let f = args
        .f
        .clone()
        .or_else(|| config.direction.clone())
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(dim));
    if f.len() != dim {
        return Err(config_err(Error::DimensionMismatch {
            what: "direction",
            expected: dim,
            got: f.len(),
        }));
    }
    let family = family(&config, &problem, &p).map_err(run_err)?;
    let formula =
        dderiv_value(&p, &f, &family, &problem, config.tolerance, config.mesh).map_err(run_err)?;
    let delta = config.delta * (p.horizon() - p.t());
    let fd = (|| -> Result<f64> {
        let moved = p.shifted(&f, delta)?;
        let base = envelope_value(&p, &family, &problem, config.steps)?;
        let next = envelope_value(&moved, &family, &problem, config.steps)?;
        Ok((next - base) / delta)
    })()
    .map_err(run_err)?;
    let gap = (formula - fd).abs();
    let _ = writeln!(out, "formula {}", fmt12(formula));
    let _ = writeln!(out, "fd {}", fmt12(fd));
    let _ = writeln!(out, "delta {}", fmt12(delta));
    let _ = writeln!(out, "gap {}", fmt12(gap));
    let _ = writeln!(out, "relative_gap {}", fmt12(gap / formula.abs().max(1.0)));
    if let Some(g) = problem.g {
        if f.len() == 1 {
            let exact = directional_derivative_example(&p, g, f[0]).map_err(run_err)?;
            let _ = writeln!(out, "closed_form {}", fmt12(exact));
        }
    }
    Ok(())
}

fn cmd_value(args: &PointArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let (config, problem) = load(&args.run)?;
    let p = point(args, &config, &problem).map_err(config_err)?;
    if let Some(g) = problem.g {
        let v = value_closed_form_example(&p, g).map_err(run_err)?;
        let _ = writeln!(out, "closed_form {}", fmt12(v));
    }
    if config.pieces > 0 {
        let b = value_bruteforce(&p, &problem, config.pieces, config.steps).map_err(run_err)?;
        let _ = writeln!(out, "bruteforce {}", fmt12(b.value));
    }
    if p.is_interior() {
        let family = CandidateFamily::constant_diracs(&problem.controls);
        let jets = EnvelopeJets::compute(&p, &family, &problem, config.mesh).map_err(run_err)?;
        let best = jets.values().into_iter().fold(f64::INFINITY, f64::min);
        let _ = writeln!(out, "envelope {}", fmt12(best));
    }
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if let Some(rel) = args.perturb_gamma {
        crate::special::perturb_gamma_for_testing(rel);
    }
    let ids: Vec<u8> = match args.criterion {
        Some(id) if acceptance::CRITERIA.iter().any(|(i, _)| *i == id) => vec![id],
        Some(id) => {
            let _ = writeln!(err, "error: no criterion {id}");
            return EXIT_USAGE;
        }
        None => acceptance::CRITERIA.iter().map(|(i, _)| *i).collect(),
    };
    let mut failed = 0;
    for id in ids {
        let report = acceptance::run(id);
        if !report.passed {
            failed += 1;
            let _ = writeln!(err, "{report}");
        } else if !args.quiet {
            let _ = writeln!(out, "{report}");
        }
    }
    if failed > 0 {
        let _ = writeln!(err, "{failed} criterion(s) failed");
        EXIT_ACCEPTANCE
    } else {
        if !args.quiet {
            let _ = writeln!(out, "all criteria passed");
        }
        EXIT_OK
    }
}
