//! Command-line front-end: one subcommand per experiment, a key-value config
//! file for overrides, CSV tables and SVG figures as output.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use lowmode_cli::config::{self, ExperimentKind, RunConfig};
use lowmode_cli::{runs, CliError};

#[derive(Parser)]
#[command(
    name = "lowmode",
    version,
    about = "Experiments for the spectral low-mode reduction of \
             -div(kappa grad u) = f on the unit square"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-refinement study: errors, observed orders, speed-ups
    Convergence(CommonArgs),
    /// Error versus spectral cutoff on a fixed fine grid
    ModeSweep(CommonArgs),
    /// Condition numbers of the reduced operator
    Conditioning(CommonArgs),
    /// Direct, CG, multigrid, and deflated-CG baselines side by side
    CompareSolvers(CommonArgs),
    /// Brute-force interface-coupling and Schur-gap report
    SchurDecay(CommonArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, CommonArgs) {
        match self {
            Command::Convergence(a) => (ExperimentKind::Convergence, a),
            Command::ModeSweep(a) => (ExperimentKind::ModeSweep, a),
            Command::Conditioning(a) => (ExperimentKind::Conditioning, a),
            Command::CompareSolvers(a) => (ExperimentKind::CompareSolvers, a),
            Command::SchurDecay(a) => (ExperimentKind::SchurDecay, a),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file overriding the experiment defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (precedence: this flag, then $LOWMODE_OUT, then the
    /// config file, then "out")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restore the full-size grid ladders the desk-scale defaults shrink
    #[arg(long)]
    paper_scale: bool,
    /// Problem name: example1, example2, or constant
    #[arg(long)]
    problem: Option<String>,
    /// Seed recorded in the provenance header
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 keeps runs fully sequential)
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(kind: ExperimentKind, args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::defaults(kind);
    if args.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        let overrides = config::parse_overrides(&text)?;
        cfg.apply_overrides(&overrides)?;
        if cfg.experiment != kind {
            return Err(CliError::Lib(lowmode::Error::InvalidArgument(format!(
                "config file is for experiment '{}' but the subcommand is '{}'",
                cfg.experiment,
                kind.id()
            ))));
        }
    }
    if let Some(problem) = &args.problem {
        cfg.problem = problem.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    } else if let Some(env_out) = std::env::var_os("LOWMODE_OUT") {
        cfg.out_dir = PathBuf::from(env_out);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, args) = cli.command.split();
    let cfg = build_config(kind, &args)?;
    // The projection kernels use the global pool; an already-initialized pool
    // (e.g. in tests) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global();

    let artifacts = runs::execute(&cfg)?;
    for table in &artifacts.tables {
        let path = table.write_csv(&cfg.out_dir)?;
        println!("wrote {}", path.display());
    }
    for (name, figure) in &artifacts.figures {
        let path = figure.write_svg(&cfg.out_dir, name)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
