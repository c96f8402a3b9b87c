mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bayes_cancel::Error;
use clap::{Args, Parser, Subcommand};

use crate::config::parse_assignment;

/// Bayesian logistic and beta-binomial models of hotel booking cancellations.
#[derive(Debug, Parser)]
#[command(name = "bayes-cancel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write draws, summaries, log-likelihoods and a manifest.
    Fit(FitArgs),
    /// Recompute the coefficient summary of a fit directory.
    Summary(SummaryArgs),
    /// Rank two or more fits by PSIS-LOO expected log predictive density.
    Compare(CompareArgs),
    /// Posterior-predictive summaries for new bookings.
    Predict(PredictArgs),
    /// Write a synthetic booking file drawn from known coefficients.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set sampler.chains=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Booking CSV to fit.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `logistic` or `beta-binomial`.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated predictor columns.
    #[arg(long)]
    features: Option<String>,
    /// Booking status coded as success (y = 1).
    #[arg(long)]
    positive_label: Option<String>,
    #[arg(long)]
    subsample_n: Option<usize>,
    #[arg(long)]
    subsample_seed: Option<u64>,
    /// Merge bookings with identical predictors into multi-trial rows.
    #[arg(long)]
    aggregate: bool,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_accept: Option<f64>,
    #[arg(long)]
    max_tree_depth: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `text`, `csv` or `json`.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// Fit directory.
    dir: PathBuf,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Fit directories (at least two).
    #[arg(required = true, num_args = 2..)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Also write the report into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Fit directory.
    fit: PathBuf,
    /// CSV of new bookings (booking status column optional).
    #[arg(long)]
    data: Option<PathBuf>,
    /// `binary` or `probability`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write predictions into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of bookings.
    #[arg(long)]
    n: Option<usize>,
    /// `logistic` or `beta-binomial`.
    #[arg(long)]
    family: Option<String>,
    /// Bookings per shared-probability group.
    #[arg(long)]
    trials: Option<u32>,
    /// Beta precision.
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process exit codes.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const SAMPLER: u8 = 4;
    pub const COMPARISON: u8 = 5;
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownFeature(_) => exit::USAGE,
        Error::Initialization { .. } | Error::Divergence { .. } | Error::Domain { .. } => {
            exit::SAMPLER
        }
        Error::Comparison(_) => exit::COMPARISON,
        _ => exit::DATA,
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("BAYES_CANCEL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "BAYES_CANCEL_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn overrides(
    config: &ConfigArgs,
    flags: Vec<(&str, Option<toml::Value>)>,
) -> Result<Vec<(String, toml::Value)>, Error> {
    let mut out = config
        .set
        .iter()
        .map(|s| parse_assignment(s))
        .collect::<Result<Vec<_>, _>>()?;
    out.extend(
        flags
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
    );
    Ok(out)
}

fn string(v: &Option<String>) -> Option<toml::Value> {
    v.clone().map(toml::Value::String)
}

fn path(v: &Option<PathBuf>) -> Option<toml::Value> {
    v.as_ref()
        .map(|p| toml::Value::String(p.display().to_string()))
}

fn int<T: TryInto<i64> + Copy>(v: Option<T>) -> Option<toml::Value> {
    v.and_then(|x| x.try_into().ok()).map(toml::Value::Integer)
}

fn float(v: Option<f64>) -> Option<toml::Value> {
    v.map(toml::Value::Float)
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    match cli.command {
        Command::Fit(a) => {
            let features = a.features.as_ref().map(|f| {
                toml::Value::Array(
                    f.split(',')
                        .map(|s| toml::Value::String(s.trim().to_string()))
                        .collect(),
                )
            });
            let o = overrides(
                &a.config,
                vec![
                    ("data.path", path(&a.data)),
                    ("model.family", string(&a.model)),
                    ("data.features", features),
                    ("data.positive_label", string(&a.positive_label)),
                    ("data.subsample_n", int(a.subsample_n)),
                    ("data.subsample_seed", int(a.subsample_seed)),
                    (
                        "data.aggregate",
                        a.aggregate.then_some(toml::Value::Boolean(true)),
                    ),
                    ("sampler.chains", int(a.chains)),
                    ("sampler.warmup", int(a.warmup)),
                    ("sampler.samples", int(a.samples)),
                    ("sampler.seed", int(a.seed)),
                    ("sampler.target_accept", float(a.target_accept)),
                    ("sampler.max_tree_depth", int(a.max_tree_depth)),
                    ("output.dir", path(&a.out)),
                    ("output.format", string(&a.format)),
                ],
            )?;
            let config = config::resolve("fit", a.config.config.as_deref(), &o)?;
            commands::fit(&config)
        }
        Command::Summary(a) => {
            commands::summary(&a.dir, commands::parse_format(a.format.as_deref())?)
        }
        Command::Compare(a) => commands::compare(
            &a.dirs,
            commands::parse_format(a.format.as_deref())?,
            a.out.as_deref(),
        ),
        Command::Predict(a) => {
            let o = overrides(
                &a.config,
                vec![
                    ("data.path", path(&a.data)),
                    ("predict.mode", string(&a.mode)),
                    ("predict.seed", int(a.seed)),
                    ("output.format", string(&a.format)),
                ],
            )?;
            let config = config::resolve("predict", a.config.config.as_deref(), &o)?;
            commands::predict(&a.fit, &config, a.out.as_deref())
        }
        Command::Simulate(a) => {
            let o = overrides(
                &a.config,
                vec![
                    ("simulate.n", int(a.n)),
                    ("simulate.family", string(&a.family)),
                    ("simulate.trials", int(a.trials)),
                    ("simulate.phi", float(a.phi)),
                    ("simulate.seed", int(a.seed)),
                    ("output.dir", path(&a.out)),
                ],
            )?;
            let config = config::resolve("simulate", a.config.config.as_deref(), &o)?;
            commands::simulate(&config)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
