use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use qsd::config::{parse, ConfigError, ExperimentConfig};
use qsd::experiments::{coefficient_table, resolve_out_dir, run, Outcome};
use qsd::presets::{preset, NAMES};
use qsd_core::kernels::{qbm_coeff_table, Kernel};

#[derive(Parser)]
#[command(name = "qsd", version, about = "Non-Markovian quantum state diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset or a configuration file.
    Run {
        /// Preset name or path to a `key = value` file.
        target: String,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Parse a configuration and report warnings without running it.
    Validate {
        /// Preset name or path to a `key = value` file.
        target: String,
        /// Print the fully resolved configuration.
        #[arg(long)]
        print: bool,
    },
    /// Tabulate the Ohmic quantum Brownian motion coefficients.
    QbmCoeffs {
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 20.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 50.0)]
        kt: f64,
        /// Defaults to 10/cutoff.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortcut for `run oracle-check`.
    OracleCheck(RunArgs),
    /// Shortcut for `run novikov`.
    Novikov(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Exit with status 1 when a gate fails.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_traj: Option<u64>,
    /// Worker threads for ensembles; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory; falls back to $QSD_OUT_DIR, then `qsd-out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if e.downcast_ref::<ConfigError>().is_some() {
            Failure::Config(e)
        } else {
            Failure::Numeric(e)
        }
    }
}

fn load(target: &str) -> Result<ExperimentConfig, Failure> {
    if let Some(cfg) = preset(target) {
        return Ok(cfg);
    }
    let path = Path::new(target);
    if !path.exists() {
        return Err(Failure::Config(anyhow::anyhow!("`{target}` is neither a preset ({}) nor a file", NAMES.join(", "))));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Config)?;
    parse(&text).map_err(|e| Failure::Config(anyhow::Error::new(e).context(path.display().to_string())))
}

fn report(outcome: &Outcome) {
    println!("{}", outcome.name);
    for line in &outcome.summary {
        println!("  {line}");
    }
    for gate in &outcome.gates {
        println!("  {gate}");
    }
    for file in &outcome.files {
        println!("  wrote {}", file.display());
    }
    println!("{}: {}", outcome.name, if outcome.passed() { "PASS" } else { "FAIL" });
}

fn execute(target: &str, args: RunArgs) -> Result<bool, Failure> {
    let mut cfg = load(target)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n_traj {
        cfg.n_traj = n;
    }
    cfg.check().map_err(|e| Failure::Config(e.into()))?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let dir = resolve_out_dir(args.out_dir);
    let outcome = run(&cfg, args.threads, Some(&dir))?;
    report(&outcome);
    Ok(outcome.passed() || !args.check)
}

fn validate(target: &str, print: bool) -> Result<bool, Failure> {
    let cfg = load(target)?;
    cfg.check().map_err(|e| Failure::Config(e.into()))?;
    let warnings = cfg.warnings();
    if print {
        print!("{}", cfg.to_text());
    }
    if warnings.is_empty() {
        println!("{}: ok", cfg.name);
    }
    for w in &warnings {
        println!("warning: {w}");
    }
    Ok(true)
}

fn qbm_coeffs(eta: f64, cutoff: f64, kt: f64, t_max: Option<f64>, points: usize, out: Option<PathBuf>) -> Result<bool, Failure> {
    let kernel = Kernel::ohmic(eta, cutoff, kt).map_err(|e| Failure::Config(e.into()))?;
    if points < 2 {
        return Err(Failure::Config(anyhow::anyhow!("--points must be at least 2")));
    }
    let t_max = t_max.unwrap_or(10.0 / cutoff);
    let grid: Vec<f64> = (0..points).map(|k| k as f64 * t_max / (points - 1) as f64).collect();
    let table = coefficient_table(&qbm_coeff_table(&kernel, &grid).map_err(anyhow::Error::from)?);
    match out {
        Some(path) => table.write(&path).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", table.render()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { target, opts } => execute(&target, opts),
        Command::Validate { target, print } => validate(&target, print),
        Command::QbmCoeffs { eta, cutoff, kt, t_max, points, out } => qbm_coeffs(eta, cutoff, kt, t_max, points, out),
        Command::OracleCheck(opts) => execute("oracle-check", opts),
        Command::Novikov(opts) => execute("novikov", opts),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
    }
}
