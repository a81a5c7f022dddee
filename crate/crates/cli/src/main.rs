use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esbgk_cli::commands;
use esbgk_cli::config::RunConfig;
use esbgk_cli::error::CliError;
use esbgk_cli::report::{constants_text, hypothesis_text};
use esbgk_cli::verify;

#[derive(Parser)]
#[command(name = "esbgk", version, about = "ES-BGK kinetic solver")]
struct Cli {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "ESBGK_WORKERS")]
    workers: Option<usize>,
    /// Seed for calibration and verification sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra `key=value` overrides applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured scenario.
    Run,
    /// Evaluate the hypotheses on the initial data.
    CheckHypotheses,
    /// Run the built-in self-checks.
    Verify,
    /// Print the model constants and the calibration corpus results.
    DeriveConstants {
        #[arg(long, allow_negative_numbers = true)]
        nu: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Per-cell macroscopic table of a snapshot.
    Moments {
        snapshot: PathBuf,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config {
                field: p.display().to_string(),
                reason: e.to_string(),
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.set)?;
    if let Command::DeriveConstants { nu, beta } = &cli.command {
        if let Some(nu) = nu {
            cfg.set("model.nu", &nu.to_string())?;
        }
        if let Some(beta) = beta {
            cfg.set("model.beta", &beta.to_string())?;
        }
    }
    if let Some(out) = &cli.output {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Run => {
            let summary = commands::run(&cfg)?;
            print!("{}", summary.to_text());
        }
        Command::CheckHypotheses => {
            let report = commands::check_hypotheses(&cfg)?;
            let text = hypothesis_text(&report);
            std::fs::create_dir_all(&cfg.output)?;
            std::fs::write(cfg.output.join("hypotheses.txt"), &text)?;
            print!("{text}");
        }
        Command::Verify => {
            let n = verify::run_all(&cfg, |(name, res)| match res {
                Ok(detail) => println!("PASS {name}: {detail}"),
                Err(msg) => println!("FAIL {name}: {msg}"),
            })?;
            println!("{n} checks passed");
        }
        Command::DeriveConstants { .. } => {
            print!("{}", constants_text(&commands::derive_constants(&cfg)?));
        }
        Command::Moments { snapshot, out } => {
            let table = commands::moments_table(snapshot, cfg.nu)?;
            match out {
                Some(p) => std::fs::write(p, table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn with_workers(workers: Option<usize>, f: impl FnOnce() -> Result<(), CliError> + Send) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::Config {
        field: "--workers".into(),
        reason: e.to_string(),
    })?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_workers(_: Option<usize>, f: impl FnOnce() -> Result<(), CliError>) -> Result<(), CliError> {
    f()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_workers(cli.workers, || execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
