//! Command-line harness for the marginal particle filter experiments.
//!
//! Every run reads a TOML config and writes one CSV table, preceded by
//! `#` lines recording the version, a hash of the config and the seed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::{BenchError, Result};
use output::{write_table, Preamble};

#[derive(Parser)]
#[command(name = "msmc-bench", version, about = "Run marginal SMC experiments from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a state and observation path from the model.
    Simulate(Common),
    /// Run one filter and print per-step estimates.
    Filter(Common),
    /// Error against the exact filtering mean over a range of particle counts.
    Convergence(Common),
    /// Empirical variance of the marginal and standard filters.
    Variance(Common),
    /// Likelihood-free sampler over a tolerance schedule.
    Abc(Common),
    /// One-step conditional mean of the weighted estimate against quadrature.
    #[command(name = "prop5")]
    ConditionalMean(Common),
    /// Replicated normalizing-constant estimates against the exact value.
    Logz(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `experiment.output`; standard output when neither is set.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 4 if the experiment's pass criterion fails.
    #[arg(long)]
    check: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Filter(_) => "filter",
            Command::Convergence(_) => "convergence",
            Command::Variance(_) => "variance",
            Command::Abc(_) => "abc",
            Command::ConditionalMean(_) => "prop5",
            Command::Logz(_) => "logz",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Filter(c)
            | Command::Convergence(c)
            | Command::Variance(c)
            | Command::Abc(c)
            | Command::ConditionalMean(c)
            | Command::Logz(c) => c,
        }
    }
}

fn run(cmd: &Command) -> Result<()> {
    let args = cmd.common();
    let bytes = std::fs::read(&args.config)
        .map_err(|e| BenchError::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| BenchError::Config("config is not UTF-8".into()))?;
    let cfg = ExperimentConfig::parse(text)?;
    cfg.check_kind(cmd.name())?;
    let seed = cfg.seed(args.seed)?;
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(BenchError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| BenchError::Config(e.to_string()))?;
    }
    let stream = cfg.stream(Some(seed))?;
    log::info!("{} with seed {seed}", cmd.name());

    let outcome = match *cmd {
        Command::Simulate(_) => commands::simulate(&cfg, stream)?,
        Command::Filter(_) => commands::filter(&cfg, stream)?,
        Command::Convergence(_) => commands::convergence(&cfg, stream)?,
        Command::Variance(_) => commands::variance(&cfg, stream)?,
        Command::Abc(_) => commands::abc(&cfg, stream)?,
        Command::ConditionalMean(_) => commands::conditional_mean(&cfg, stream)?,
        Command::Logz(_) => commands::logz(&cfg, stream)?,
    };

    let preamble = Preamble { command: cmd.name(), config_bytes: &bytes, seed };
    let dest = args.out.clone().or_else(|| cfg.experiment.output.clone());
    match dest {
        Some(path) => {
            let file = File::create(&path)?;
            write_table(BufWriter::new(file), &preamble, &outcome.table)?;
        }
        None => write_table(io::stdout().lock(), &preamble, &outcome.table)?,
    }

    match outcome.check {
        Some(Err(reason)) if args.check => Err(BenchError::Check(reason)),
        Some(Err(reason)) => {
            log::warn!("criterion not met: {reason}");
            Ok(())
        }
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "msmc-bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
