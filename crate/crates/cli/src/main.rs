//! `svsc` command-line tool.
//!
//! Exit codes: 0 success, 1 partial or numerical failure, 2 configuration
//! or input error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svsc::estimation::MarketSeries;

use config::{read_json, EstimateConfig, RunConfig};
use output::{Format, Header};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failure(String),
}

#[derive(Parser)]
#[command(
    name = "svsc",
    version,
    about = "Stochastic volatility / stochastic correlation pricing tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Heston model to the three vanilla quotes.
    Calibrate(RunArgs),
    /// Approximation, Black-Scholes and Heston prices per instrument.
    Price(RunArgs),
    /// Full-model Monte Carlo prices with standard errors.
    McBenchmark(RunArgs),
    /// SVSC and Heston implied-volatility smiles.
    Smile(RunArgs),
    /// Black-Scholes vega before and after the replication hedge.
    VegaProfile(RunArgs),
    /// Estimate beta, gamma and xi from a market CSV.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides engine.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides engine.paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides engine.steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides engine.buckets.
    #[arg(long)]
    buckets: Option<usize>,
    /// Report prices in basis points of notional.
    #[arg(long)]
    bp: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Market CSV with header date,spot,atm_3m,atm_1y,rr25_3m,rr25_1y.
    input: PathBuf,
    /// JSON estimation options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the rolling window length.
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

fn load_run(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = read_json(&args.config)?;
    if let Some(s) = args.seed {
        cfg.engine.seed = s;
    }
    if let Some(p) = args.paths {
        cfg.engine.paths = p;
    }
    if let Some(s) = args.steps {
        cfg.engine.steps = s;
    }
    if let Some(b) = args.buckets {
        cfg.engine.buckets = b;
    }
    Ok(cfg)
}

fn emit(table: &output::Table, out: &OutArgs) -> Result<(), CliError> {
    match &out.out {
        Some(path) => {
            let f =
                File::create(path).map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(f);
            table.write(&mut w, out.format)?;
            w.flush().map_err(|e| CliError::Failure(e.to_string()))
        }
        None => {
            let stdout = std::io::stdout();
            table.write(stdout.lock(), out.format)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (table, partial, out) = match &cli.command {
        Command::Estimate(a) => {
            let opts = match &a.config {
                Some(p) => read_json::<EstimateConfig>(p)?,
                None => EstimateConfig::default(),
            };
            let opts = EstimateConfig {
                window: a.window.unwrap_or(opts.window),
                ..opts
            };
            let bytes = std::fs::read(&a.input)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", a.input.display())))?;
            let series = MarketSeries::<f64>::from_csv(bytes.as_slice())
                .map_err(|e| CliError::Config(format!("{}: {e}", a.input.display())))?;
            let header = Header::new("estimate", &opts, &bytes, None);
            let (t, p) = commands::estimate(&series, &opts, header)?;
            (t, p, &a.out)
        }
        Command::Calibrate(a)
        | Command::Price(a)
        | Command::McBenchmark(a)
        | Command::Smile(a)
        | Command::VegaProfile(a) => {
            let cfg = load_run(a)?;
            let res = cfg.resolve()?;
            let (name, seeded) = match cli.command {
                Command::Calibrate(_) => ("calibrate", false),
                Command::Price(_) => ("price", true),
                Command::McBenchmark(_) => ("mc-benchmark", true),
                Command::Smile(_) => ("smile", true),
                _ => ("vega-profile", false),
            };
            let header = Header::new(name, &cfg, &[], seeded.then_some(cfg.engine.seed));
            let (t, p) = match cli.command {
                Command::Calibrate(_) => commands::calibrate(&res, header)?,
                Command::Price(_) => commands::price(&cfg, &res, header, a.bp)?,
                Command::McBenchmark(_) => commands::mc_benchmark(&cfg, &res, header, a.bp)?,
                Command::Smile(_) => commands::smile(&cfg, &res, header)?,
                _ => commands::vega_profile(&cfg, &res, header)?,
            };
            (t, p, &a.out)
        }
    };
    emit(&table, out)?;
    Ok(partial)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(CliError::Failure(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
