//! `orbitpool`: run configured pooling verification experiments.
//!
//! Exit status: 0 when every bound holds, 2 when a bound is violated beyond
//! its tolerance, 1 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbitpool_core::experiments::{run, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "orbitpool", version, about = "Group-orbit pooling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `output` or `orbitpool-out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print only failures and errors.
        #[arg(long)]
        quiet: bool,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("ORBITPOOL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("ORBITPOOL_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    match cli.command {
        Command::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(cfg) => {
                println!("{}: valid {} config", config.display(), cfg.experiment.name());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_ERROR)
            }
        },
        Command::Run {
            config,
            out,
            seed,
            quiet,
        } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_ERROR);
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("orbitpool-out"));
            let progress = |msg: &str| {
                if !quiet {
                    println!("{msg}");
                }
            };
            match run(&cfg, &out, &progress) {
                Ok(summary) if summary.passed => {
                    progress(&format!(
                        "{}: {} checks passed, results in {}",
                        cfg.experiment.name(),
                        summary.report_count,
                        out.display()
                    ));
                    ExitCode::SUCCESS
                }
                Ok(summary) => {
                    for f in &summary.failures {
                        eprintln!(
                            "bound violated: {} ({}): lhs {:e} > rhs {:e} x (1 + {:.3e})",
                            out.join(f.location()).display(),
                            f.id,
                            f.measured_lhs,
                            f.analytic_rhs,
                            f.slack_total
                        );
                    }
                    ExitCode::from(EXIT_VIOLATION)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ERROR)
                }
            }
        }
    }
}
