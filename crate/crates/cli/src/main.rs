use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pel_cli::{emit_report, exit_code_for, run, CliError, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "pel",
    version,
    about = "Parabolic energy laboratory experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration; defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the CSV tables and summary.txt.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Nodes per axis.
    #[arg(long, global = true)]
    nx: Option<usize>,
    /// Time steps.
    #[arg(long, global = true)]
    nt: Option<usize>,
    /// Implicit weight of the time scheme (0.5 or 1.0).
    #[arg(long = "theta-scheme", global = true)]
    theta_scheme: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// One parabolic solve with residual and energy report.
    Solve,
    /// Energy estimate over the K list and the K-doubling search.
    Sweep,
    /// Sharpness family and initial-time table.
    Sharpness,
    /// Energy ratio at t = 2^-j.
    Asymptotic,
    /// Delay fixed-point solve and contraction report.
    Delay,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Solve => Command::Solve,
            Sub::Sweep => Command::Sweep,
            Sub::Sharpness => Command::Sharpness,
            Sub::Asymptotic => Command::Asymptotic,
            Sub::Delay => Command::Delay,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PEL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Config(format!(
                "PEL_THREADS = {value:?} must be a positive integer"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        nx: cli.nx,
        nt: cli.nt,
        theta: cli.theta_scheme,
        seed: cli.seed,
    };
    let cfg = overrides.apply(cfg)?;
    let report = run(cli.command.into(), &cfg)?;
    emit_report(&report, &cli.out)?;
    print!("{}", report.summary());
    Ok(exit_code_for(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("pel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
