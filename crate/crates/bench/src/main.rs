use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use intmit_bench::{init_threads, run, Arch, BenchResult, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "intmit", version, about = "Interference mitigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides output_dir (takes precedence over INTMIT_OUTPUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Modular,
    Monolithic,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate uplink datasets for every antenna configuration.
    GenData,
    /// Train an uplink network on the generated datasets.
    TrainUl {
        #[arg(long, value_enum, default_value = "modular")]
        arch: ArchArg,
    },
    /// Train the downlink network.
    TrainDl,
    /// Held-out NMSE of the trained uplink networks.
    EvalUl,
    /// BLER of every receiver at the configured operating point.
    EvalDl,
    /// BLER of every receiver across the SINR grid.
    SweepSinr,
    /// Held-out NMSE across the scale-factor grid.
    SweepSf,
    /// Finite-difference gradient checks (exit 4 on failure).
    GradCheck,
    /// Inference latency at several batch sizes.
    Timing,
}

fn execute(cli: Cli) -> BenchResult<()> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk("out/desk"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.with_output_override(cli.out);
    let cmd = match cli.command {
        Cmd::GenData => Command::GenData,
        Cmd::TrainUl { arch: ArchArg::Modular } => Command::TrainUl(Arch::Modular),
        Cmd::TrainUl { arch: ArchArg::Monolithic } => Command::TrainUl(Arch::Monolithic),
        Cmd::TrainDl => Command::TrainDl,
        Cmd::EvalUl => Command::EvalUl,
        Cmd::EvalDl => Command::EvalDl,
        Cmd::SweepSinr => Command::SweepSinr,
        Cmd::SweepSf => Command::SweepSf,
        Cmd::GradCheck => Command::GradCheck,
        Cmd::Timing => Command::Timing,
    };
    let out = run(&cfg, cmd)?;
    for line in &out.summary {
        println!("{line}");
    }
    for path in &out.artifacts {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
