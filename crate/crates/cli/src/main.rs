use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use shnls::groundstate::{self, ShootOptions};
use shnls::harness::{self, RunConfig, SweepConfig};
use shnls::validation::{self, Suite};
use shnls::Error;

/// Pseudospectral NLS / Schrödinger–Helmholtz / Schrödinger–Newton solver.
#[derive(Debug, Parser)]
#[command(name = "shnls", version)]
struct Cli {
    /// Only print the summary line and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// More log output (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run(RunArgs),
    /// Run an alpha-continuation sweep.
    Sweep(RunArgs),
    /// Solve for the radial ground state and write its profile.
    Townes(TownesArgs),
    /// Run the built-in validation suites.
    Validate {
        #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(Suite::NAMES))]
        suite: String,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TownesArgs {
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Bisection bracket on R(0); defaults to a dimension-dependent guess.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    bracket: Option<Vec<f64>>,
    #[arg(long, default_value_t = groundstate::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = groundstate::DEFAULT_R_MAX)]
    r_max: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

enum Failure {
    Validation,
    Error(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SHNLS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "SHNLS_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::debug!("SHNLS_THREADS={n} ignored in a sequential build");
    Ok(())
}

fn existing(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{}: config file not found",
            path.display()
        )))
    }
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    existing(&args.config)?;
    let mut config = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output.directory = out.clone();
    }
    let s = harness::execute(&config)?;
    println!(
        "{}: t={} steps={} mass_drift={:.3e} hamiltonian_drift={:.3e} regime={} out={}",
        s.reason,
        s.t_final,
        s.steps,
        s.mass_drift,
        s.hamiltonian_drift,
        s.regime.regime,
        config.output.directory.display()
    );
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), Failure> {
    existing(&args.config)?;
    let mut sweep = SweepConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        sweep.directory = out.clone();
    }
    let report = harness::alpha_sweep(&sweep)?;
    for e in &report.entries {
        match (&e.summary, &e.error) {
            (Some(s), _) => log::info!(
                "{}: {} t={} peak_sup={:.6}",
                e.label,
                s.reason,
                s.t_final,
                s.peak_sup
            ),
            (None, Some(err)) => log::error!("{}: failed: {err}", e.label),
            (None, None) => {}
        }
    }
    println!(
        "sweep: {} runs, {} failed, peak_sup_nondecreasing={} report={}",
        report.entries.len(),
        report.failures,
        report.peak_sup_nondecreasing,
        sweep.directory.join("sweep_report.json").display()
    );
    Ok(())
}

fn townes(args: &TownesArgs) -> Result<(), Failure> {
    let bracket = match args.bracket.as_deref() {
        Some([lo, hi]) => (*lo, *hi),
        _ => groundstate::default_bracket(args.sigma, args.dim),
    };
    let opts = ShootOptions {
        r_max: args.r_max,
        ..ShootOptions::default()
    };
    let profile =
        groundstate::solve_ground_state_with(args.sigma, args.dim, bracket, &opts, args.tol)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let csv = args.out.join("ground_state.csv");
    std::fs::write(&csv, profile.to_csv()).map_err(|e| Error::Io {
        path: csv.clone(),
        source: e,
    })?;
    let meta = args.out.join("ground_state.json");
    let text = serde_json::to_string_pretty(&profile.meta()).expect("metadata serializes");
    std::fs::write(&meta, text + "\n").map_err(|e| Error::Io {
        path: meta.clone(),
        source: e,
    })?;
    println!(
        "R0 = {:.10} power = {:.10} profile={}",
        profile.r0,
        profile.power,
        csv.display()
    );
    Ok(())
}

fn validate(suite: &str, quiet: bool) -> Result<(), Failure> {
    let suite: Suite = suite.parse()?;
    let checks = validation::run_suite(suite)?;
    if !quiet {
        for c in &checks {
            println!("{c}");
        }
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("validate {suite}: {passed}/{} passed", checks.len());
    if passed == checks.len() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Townes(args) => townes(args),
        Command::Validate { suite } => validate(suite, cli.quiet),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}
