//! Command-line entry point of the `upwind` experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use upwind_cli::catalog::{catalog_json, catalog_text};
use upwind_cli::{run, ConfigError, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "upwind", version, about = "Run upwind transport experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Experiment definition (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment given by --config.
    Run,
    /// List built-in meshes, fields and experiments.
    Catalog {
        /// Machine-readable output accepted by the config parser.
        #[arg(long)]
        json: bool,
    },
    /// Print the resolved configuration without running it.
    Resolve,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    cfg.output_dir = Some(out);
    cfg.resolve()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size the worker pool: {e}");
        }
    }
    match cli.command {
        Some(Command::Catalog { json }) => {
            println!("{}", if json { catalog_json() } else { catalog_text() });
            ExitCode::SUCCESS
        }
        Some(Command::Resolve) => match load(&cli) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Some(Command::Run) | None => {
            let result = load(&cli).map_err(RunError::from).and_then(|cfg| {
                let out = cfg.output_dir.clone().expect("resolved configs carry an output directory");
                run(&cfg, &out)
            });
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
