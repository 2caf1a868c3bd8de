use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use exec_lab::config::ExperimentConfig;
use exec_lab::figures::{reproduce_figure, FigureName};
use exec_lab::selftest::{run_selftest, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "exec-lab", version, about = "Optimal execution with stochastic impact and resilience")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `out_dir`.
        #[arg(long, env = "EXEC_LAB_OUT")]
        out: Option<PathBuf>,
    },
    /// Write the data of one plan figure (lambertw, jump, negres).
    Figure {
        name: FigureName,
        #[arg(long, env = "EXEC_LAB_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run the acceptance suite and report one line per criterion.
    Selftest {
        #[arg(long, env = "EXEC_LAB_OUT", default_value = "out/selftest")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment));
            let start = Instant::now();
            let summary = exec_lab::experiments::run(&cfg, &out)?;
            for check in &summary.checks {
                println!("{} {}: {:.6e}", if check.pass { "PASS" } else { "FAIL" }, check.name, check.value);
            }
            println!(
                "{} -> {} ({:.1}s)",
                summary.experiment,
                out.join("summary.json").display(),
                start.elapsed().as_secs_f64()
            );
            Ok(summary.pass)
        }
        Command::Figure { name, out, seed } => {
            let output = reproduce_figure(name, &out, seed)?;
            for check in &output.checks {
                println!("{} {}: {:.6e}", if check.pass { "PASS" } else { "FAIL" }, check.name, check.value);
            }
            println!("wrote {}", output.path.display());
            Ok(output.checks.iter().all(|c| c.pass))
        }
        Command::Selftest { out } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let outcomes = run_selftest(&out, |line| println!("{line}"))?;
            Ok(outcomes.iter().all(|o| o.pass))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
