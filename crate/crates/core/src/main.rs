//! Command line interface for the run-and-tumble model hierarchy.

use clap::{Parser, Subcommand};
use runtumble::config::RunConfig;
use runtumble::runner;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "runtumble", version, about = "Run-and-tumble chemotaxis simulators")]
struct Cli {
    /// Configuration file (TOML); defaults fill every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Wave speed override (um/s).
    #[arg(long, global = true)]
    u: Option<f64>,

    /// Scale-separation override.
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Methylation noise override.
    #[arg(long, global = true, value_parser = ["on", "off"])]
    noise: Option<String>,

    /// Worker threads (also via RT_THREADS).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kinetic solver with internal state in blow-up coordinates.
    SimulateFull,
    /// Limiting kinetic solver with the bulk tumbling kernel.
    SimulateLimit,
    /// Stochastic cell-based simulation.
    SimulateAgents,
    /// Tabulate the bulk kernels T(u) to CSV.
    Kernel,
    /// Epsilon-convergence study of the full model against the limit model.
    Convergence,
    /// Pairwise comparison of two finished output directories.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
}

fn load_config(cli: &Cli) -> runtumble::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(u) = cli.u {
        cfg.signal.u_um_per_s = u;
    }
    if let Some(eps) = cli.epsilon {
        cfg.pathway.epsilon = eps;
    }
    if let Some(noise) = &cli.noise {
        cfg.pathway.noise_enabled = noise == "on";
    }
    Ok(cfg)
}

fn run(cli: Cli) -> runtumble::Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::SimulateFull => {
            let out = runner::simulate_full(&cfg, &cli.out, cli.workers)?;
            println!("wrote {}", out.display());
        }
        Command::SimulateLimit => {
            let out = runner::simulate_limit(&cfg, &cli.out, cli.workers)?;
            println!("wrote {}", out.display());
        }
        Command::SimulateAgents => {
            let out = runner::simulate_agents(&cfg, &cli.out, cli.workers)?;
            println!("wrote {}", out.display());
        }
        Command::Kernel => {
            let out = runner::kernel_table(&cfg, &cli.out)?;
            println!("wrote {}", out.display());
        }
        Command::Convergence => {
            let out = runner::convergence(&cfg, &cli.out, cli.workers)?;
            println!("wrote {}", out.display());
        }
        Command::Compare { dir_a, dir_b } => {
            runner::compare(dir_a, dir_b, Some(&cli.out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
