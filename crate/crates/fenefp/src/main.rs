use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fenefp::config::load_config;
use fenefp::output::write_outputs;
use fenefp::run::run_scenario;
use fenefp::selftest;

#[derive(Parser, Debug)]
#[command(name = "fenefp", version, about = "FENE dumbbell Navier–Stokes–Fokker–Planck solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario described by a TOML file.
    Run {
        config: PathBuf,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Treat configuration warnings as errors.
        #[arg(long)]
        strict: bool,
        /// Suppress per-step progress.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Validate a configuration file without running it.
    Check {
        config: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Run the property suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include the long trajectory checks.
        #[arg(long)]
        full: bool,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FENEFP_THREADS") {
        let n: usize = v.parse().with_context(|| format!("FENEFP_THREADS = {v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<u8> {
    init_threads()?;
    match cli.command {
        Command::Check { config, strict } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let checked = load_config(&text, strict)?;
            for w in &checked.warnings {
                eprintln!("warning: {w}");
            }
            let (dt, n) = checked.config.time_grid().map_err(anyhow::Error::msg)?;
            println!("{}: valid ({} scenario, Δt = {dt}, {n} steps)", config.display(), checked.config.scenario.name);
            Ok(0)
        }
        Command::Run { config, seed, out_dir, strict, quiet } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut checked = load_config(&text, strict)?;
            for w in &checked.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(s) = seed {
                checked.config.seed = s;
            }
            if let Some(d) = out_dir {
                checked.config.output.dir = d;
            }
            let cfg = checked.config;
            let start = Instant::now();
            let outcome = run_scenario(&cfg, |p| {
                if !quiet {
                    eprintln!(
                        "step {:>5}/{} t = {:.5} free energy = {:.10e} fixed-point iterations = {}",
                        p.step, p.steps, p.t, p.free_energy, p.fixed_point_iterations
                    );
                }
            })?;
            write_outputs(&outcome, &cfg.output.dir).with_context(|| format!("writing outputs to {}", cfg.output.dir.display()))?;
            for v in &outcome.verdicts {
                println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            println!("{} steps in {:.2?}; outputs in {}", outcome.steps, start.elapsed(), cfg.output.dir.display());
            Ok(outcome.exit_code() as u8)
        }
        Command::Selftest { seed, full } => {
            let checks = selftest::run_all(seed, full)?;
            for c in &checks {
                println!("{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.title, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
