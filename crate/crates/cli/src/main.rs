use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use locsense_cli::{figures, planned_units, run, ExperimentConfig, RunOptions, CACHE_ENV, DEFAULT_CACHE_DIR};

#[derive(Parser)]
#[command(name = "locsense", version, about = "Fisher-information sweeps of quasi-periodic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a config, reusing cached points.
    Run {
        config: PathBuf,
        /// Size of the worker pool (default: config value, then all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, env = CACHE_ENV, default_value = DEFAULT_CACHE_DIR)]
        cache_dir: PathBuf,
        /// Recompute every point, ignoring cached results.
        #[arg(long)]
        force: bool,
    },
    /// List figure panels with their config templates and tolerances.
    Figures {
        /// Also write the config templates into this directory.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            workers,
            cache_dir,
            force,
        } => ExperimentConfig::load(&config).and_then(|cfg| {
            if workers == Some(0) {
                return Err(locsense_cli::CliError::Config("--workers must be positive".into()));
            }
            let record = run(
                &cfg,
                &config,
                &RunOptions {
                    cache_dir,
                    workers,
                    force,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&record)?);
            Ok(())
        }),
        Command::Figures { write } => {
            print!("{}", figures::render_catalog());
            match write {
                Some(dir) => figures::write_templates(&dir).map(|files| {
                    println!("wrote {} templates to {}", files.len(), dir.display());
                }),
                None => Ok(()),
            }
        }
        Command::Validate { config } => ExperimentConfig::load(&config).map(|cfg| {
            println!(
                "ok: kind={} sizes={:?} units={} hash={}",
                cfg.kind.as_str(),
                cfg.sizes,
                planned_units(&cfg),
                cfg.hash()
            );
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
