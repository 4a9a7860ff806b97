//! Command-line driver: each subcommand runs one experiment kind from a
//! configuration document, prints its verdicts, and exits 0 when every check
//! passed, 1 on a failed check, and 2 on a usage or configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsx_core::harness::{self, ExperimentConfig, ExperimentKind, HarnessError};

#[derive(Parser)]
#[command(
    name = "qsx",
    version,
    about = "Boundary-driven exclusion process toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration document (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Replica count override
    #[arg(long)]
    replicas: Option<usize>,
    /// Directory for columnar tables and the run manifest
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Lattice half-width override
    #[arg(long)]
    n: Option<u32>,
    /// Acceleration exponent override
    #[arg(long)]
    alpha: Option<f64>,
    /// Mesoscopic averaging fraction override
    #[arg(long)]
    eps: Option<f64>,
    /// Macroscopic grid resolution override, applied to both directions
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Replica trajectories against the quasi-static profiles and currents
    Simulate(Common),
    /// Cost functional on the typical pair and its current reversal
    Rate(Common),
    /// Static cost scan over current slopes between the reservoirs
    Bd(Common),
    /// Monte Carlo occupation laws against the exact master equation
    OracleCheck(Common),
    /// Unit-mean checks of the exponential tilt martingale
    MartingaleCheck(Common),
    /// Entropy production of tilted dynamics over a width ladder
    EntropyScan(Common),
    /// Time-reversal identity on random compatible pairs
    FluctuationCheck(Common),
    /// Cost continuity under current truncation and profile smoothing
    Regularize(Common),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Simulate(_) => ExperimentKind::HydroConvergence,
            Command::Rate(_) => ExperimentKind::RateEval,
            Command::Bd(_) => ExperimentKind::BdScan,
            Command::OracleCheck(_) => ExperimentKind::OracleCheck,
            Command::MartingaleCheck(_) => ExperimentKind::MartingaleCheck,
            Command::EntropyScan(_) => ExperimentKind::TiltedEntropy,
            Command::FluctuationCheck(_) => ExperimentKind::FluctuationCheck,
            Command::Regularize(_) => ExperimentKind::RegularizationScan,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Rate(c)
            | Command::Bd(c)
            | Command::OracleCheck(c)
            | Command::MartingaleCheck(c)
            | Command::EntropyScan(c)
            | Command::FluctuationCheck(c)
            | Command::Regularize(c) => c,
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    let common = cli.command.common();
    let mut config = ExperimentConfig::load(&common.config)?;
    config.kind = cli.command.kind();
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(replicas) = common.replicas {
        config.replicas = replicas;
    }
    if let Some(n) = common.n {
        config.scaling.n = n;
    }
    if let Some(alpha) = common.alpha {
        config.scaling.alpha = alpha;
    }
    if let Some(eps) = common.eps {
        config.experiment.eps = eps;
    }
    if let Some(grid) = common.grid {
        config.grid.m_t = grid;
        config.grid.m_y = grid;
    }
    config.validate()?;

    let manifest = harness::run(&config, common.out.as_deref())?;
    if let Some(dir) = &common.out {
        for table in &manifest.tables {
            let path = dir.join(table);
            if matches!(cli.command, Command::EntropyScan(_)) {
                if let Ok(text) = std::fs::read_to_string(&path) {
                    print!("{text}");
                }
            }
            println!("wrote {}", path.display());
        }
        println!("wrote {}", dir.join("verdicts.tsv").display());
        println!("wrote {}", dir.join("manifest.toml").display());
    }
    for v in &manifest.verdicts {
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {}: value={:.6e} threshold={:.6e}",
            v.name, v.value, v.threshold
        );
    }
    Ok(manifest.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
