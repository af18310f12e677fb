use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use harmgrad::harness::{self, Config, Experiment};

#[derive(Parser, Debug)]
#[command(
    name = "harmgrad",
    version,
    about = "Run harmonic-gradient experiments from JSON configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// JSON config: {"experiment": .., "seed": .., "params": {..}}
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json, CSV tables and run-meta.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quasi-mode bracket orders and conjugated residual decay.
    QuasimodeResidual(RunArgs),
    /// Stationary-phase expansion against quadrature.
    StationaryPhase(RunArgs),
    /// Structure fit and recovery for a planted tensor.
    DensityCheck(RunArgs),
    /// Two-gradient identity: plant, decompose, Tartar (or one of them).
    Lincal(RunArgs),
    /// Forward solver convergence orders.
    QlsForward(RunArgs),
    /// Second linearization against direct moments.
    QlsDtn(RunArgs),
    /// Coefficient separation by second-linearization moments.
    QlsUnique(RunArgs),
    /// Run any registered experiment.
    Run(RunArgs),
    /// Print the registered experiment names.
    List,
}

fn execute(family: Option<&str>, args: &RunArgs) -> Result<bool> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = Config::load(&args.config)?;
    let kind = cfg.kind()?;
    if let Some(f) = family {
        if kind.family() != f {
            bail!(
                "config names `{}`, which is not run by `{f}`",
                cfg.experiment
            );
        }
    }
    let out = harness::run_config(&cfg, &args.out_dir)
        .with_context(|| format!("running `{}`", cfg.experiment))?;
    for m in &out.report.metrics {
        println!(
            "{:<5} {:<40} {:>12.4e}  tol {:.1e}",
            if m.pass { "ok" } else { "FAIL" },
            m.name,
            m.value,
            m.tol
        );
    }
    println!("report: {}", out.report_path.display());
    println!(
        "{}: {}",
        cfg.experiment,
        if out.pass() { "pass" } else { "fail" }
    );
    Ok(out.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (family, args) = match &cli.command {
        Command::List => {
            for e in Experiment::ALL {
                println!("{e}");
            }
            return ExitCode::SUCCESS;
        }
        Command::QuasimodeResidual(a) => (Some("quasimode-residual"), a),
        Command::StationaryPhase(a) => (Some("stationary-phase"), a),
        Command::DensityCheck(a) => (Some("density-check"), a),
        Command::Lincal(a) => (Some("lincal"), a),
        Command::QlsForward(a) => (Some("qls-forward"), a),
        Command::QlsDtn(a) => (Some("qls-dtn"), a),
        Command::QlsUnique(a) => (Some("qls-unique"), a),
        Command::Run(a) => (None, a),
    };
    match execute(family, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
