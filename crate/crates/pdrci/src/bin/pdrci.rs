use clap::{Args, Parser, Subcommand};
use pdrci::cli::{self, ProblemSource, RunConfig};
use pdrci::synthesis::SynthesisOptions;
use std::path::PathBuf;

/// Invariant-set synthesis for polytopic LPV systems.
#[derive(Parser)]
#[command(name = "pdrci", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a parameter-dependent invariant set and gains.
    Synthesize(CommonArgs),
    /// Check a stored result by randomized simulation.
    Verify(CommonArgs),
    /// Emit plot-ready CSV artifacts from a stored result.
    ExportPlot(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Built-in problem name (demo-1d, demo-double-integrator,
    /// demo-van-der-pol).
    #[arg(long, conflicts_with = "problem")]
    preset: Option<String>,
    /// Problem description file (JSON).
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Face-pair count of the set.
    #[arg(long, default_value_t = 4)]
    np: usize,
    /// Relaxation order of the simplex conditions.
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Stage-one solve count.
    #[arg(long, default_value_t = 10)]
    iters1: usize,
    /// Stage-two solve count.
    #[arg(long, default_value_t = 60)]
    iters2: usize,
    /// Scheduling-grid lattice density.
    #[arg(long, default_value_t = 4)]
    grid: u32,
    /// Boundary samples beyond the bounding-box corners.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    /// Output-energy bound (enables the performance certificate).
    #[arg(long)]
    gamma: Option<f64>,
    /// Strictness margin replacing strict matrix inequalities.
    #[arg(long, default_value_t = 1e-7)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Monte-Carlo trials of the verification checks.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
}

fn to_config(args: CommonArgs) -> Result<RunConfig, String> {
    let source = match (args.preset, args.problem) {
        (Some(name), None) => ProblemSource::Preset(name),
        (None, Some(path)) => ProblemSource::File(path),
        (None, None) => return Err("one of --preset or --problem is required".into()),
        (Some(_), Some(_)) => return Err("--preset conflicts with --problem".into()),
    };
    Ok(RunConfig {
        source,
        gamma: args.gamma,
        options: SynthesisOptions {
            n_p: args.np,
            d: args.d,
            iters_stage1: args.iters1,
            iters_stage2: args.iters2,
            epsilon: args.eps,
            grid_resolution: args.grid,
            extra_boundary_samples: args.samples,
            seed: args.seed,
            ..Default::default()
        },
        out_dir: args.out,
        trials: args.trials,
    })
}

fn main() {
    let cli = Cli::parse();
    let (runner, args): (fn(&RunConfig) -> i32, CommonArgs) = match cli.command {
        Command::Synthesize(args) => (cli::cmd_synthesize, args),
        Command::Verify(args) => (cli::cmd_verify, args),
        Command::ExportPlot(args) => (cli::cmd_export_plot, args),
    };
    match to_config(args) {
        Ok(config) => std::process::exit(runner(&config)),
        Err(msg) => {
            println!("{{\"error\":{msg:?},\"kind\":\"config\"}}");
            std::process::exit(cli::EXIT_USAGE);
        }
    }
}
