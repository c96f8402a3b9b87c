use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bayes_cancel::artifacts::{
    observation_fingerprint, read_draws_csv, sha256_file, write_draws_csv, write_loglik, DrawsFile,
};
use bayes_cancel::diagnostics::{summarize, summarize_named, SummaryTable, FORMAT_HEADER_SUMMARY};
use bayes_cancel::ingest::{
    aggregate_trials_with_groups, build_design_matrix, parse_csv, subsample, EncodingPlan, Schema,
};
use bayes_cancel::loo::{compare as compare_loo, elpd_loo, LooResult};
use bayes_cancel::model::{
    group_pointwise, pointwise_log_lik, sample_posterior, Family, ModelSpec,
};
use bayes_cancel::predict::{
    prediction_table, predictions_json, predictions_text, write_predictions_csv,
};
use bayes_cancel::simulate::simulate as simulate_bookings;
use bayes_cancel::{Error, Result};
use log::{info, warn};
use serde_json::json;

use crate::config::{OutputFormat, RunConfig};

pub const FORMAT_HEADER_ENCODING: &str = "# bayes-cancel encoding v1";
pub const FORMAT_HEADER_MODEL: &str = "# bayes-cancel model v1";
pub const FORMAT_HEADER_COMPARE: &str = "# bayes-cancel compare v1";

pub fn parse_format(raw: Option<&str>) -> Result<OutputFormat> {
    match raw.map(str::to_ascii_lowercase).as_deref() {
        None | Some("text") => Ok(OutputFormat::Text),
        Some("csv") => Ok(OutputFormat::Csv),
        Some("json") | Some("structured") => Ok(OutputFormat::Json),
        Some(other) => Err(Error::Config(format!(
            "--format: expected text, csv or json, got {other:?}"
        ))),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_string(value: &serde_json::Value, path: &Path) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn print_summary(table: &SummaryTable, format: OutputFormat) -> Result<()> {
    let stdout = std::io::stdout();
    match format {
        OutputFormat::Text => print!("{}", table.to_text()),
        OutputFormat::Csv => table.write_csv(stdout.lock())?,
        OutputFormat::Json => println!("{}", table.to_json()?),
    }
    Ok(())
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn fit(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let started = Instant::now();
    let started_unix = unix_seconds();
    let data_path = config.data_path()?;
    let family = config.family()?;
    let features = config.features()?;

    let full = parse_csv(data_path, &Schema::bookings())?;
    let rows_read = full.row_count();
    let data = match config.data.subsample_n {
        Some(n) => subsample(&full, n, config.data.subsample_seed)?,
        None => full,
    };
    if data.is_empty() {
        return Err(Error::Empty("booking data"));
    }
    let plan = EncodingPlan::discover(&data, &features, &config.data.positive_label)?;
    let per_row = build_design_matrix(&data, &plan)?;
    for column in per_row.constant_columns() {
        warn!("column {column} is constant in the fitted rows; its coefficient is identified by the prior only");
    }
    let (grouped, groups) = aggregate_trials_with_groups(&per_row);
    let aggregate = config.data.aggregate;
    let fit_dm = if aggregate && family == Family::BetaBinomialLogit {
        &grouped
    } else {
        &per_row
    };
    if family == Family::BetaBinomialLogit && fit_dm.all_single_trials() {
        warn!("every observation is a single trial, so phi is not identified and its posterior equals its prior");
    }
    let spec = config.model_spec(fit_dm.n_cols())?;

    let sampling_started = Instant::now();
    let samples = sample_posterior(&spec, fit_dm, &config.sampler.to_sampler_config())?;
    let sampling_seconds = sampling_started.elapsed().as_secs_f64();
    let divergent = samples.divergent_count();
    if divergent > 0 {
        warn!(
            "{divergent} of {} post-warmup transitions diverged",
            samples.total_draws()
        );
    }

    let table = summarize(&samples, &spec)?;
    let rhat = table.max_rhat();
    if rhat > 1.01 {
        warn!("largest Rhat is {rhat:.3}; chains may not have converged");
    }
    let pointwise = pointwise_log_lik(&spec, fit_dm, &samples)?;
    let (loglik, observations) = if !aggregate {
        (pointwise, &per_row)
    } else if family == Family::BernoulliLogit {
        (group_pointwise(&pointwise, &groups, &grouped)?, &grouped)
    } else {
        (pointwise, &grouped)
    };
    let loo = elpd_loo(&loglik)?;
    if loo.n_high_k > 0 {
        warn!("{} observations have Pareto k above 0.7", loo.n_high_k);
    }

    let out = &config.output.dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("config.toml"), config.to_toml()?)?;
    write_file(
        &out.join("encoding.toml"),
        format!("{FORMAT_HEADER_ENCODING}\n{}", plan.to_toml()?),
    )?;
    write_file(
        &out.join("model.toml"),
        format!("{FORMAT_HEADER_MODEL}\n{}", spec.to_toml()?),
    )?;
    let mut draws_out = create(&out.join("draws.csv"))?;
    write_draws_csv(&samples, &mut draws_out)?;
    drop(draws_out);
    write_file(
        &out.join("summary.txt"),
        format!("{FORMAT_HEADER_SUMMARY}\n{}", table.to_text()),
    )?;
    table.write_csv(create(&out.join("summary.csv"))?)?;
    write_file(&out.join("summary.json"), table.to_json()?)?;
    write_loglik(&loglik, create(&out.join("loglik.bin"))?)?;
    write_file(&out.join("loo.json"), loo.to_json()?)?;

    let manifest_path = out.join("manifest.json");
    let manifest = json!({
        "format_version": "bayes-cancel manifest v1",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": "fit",
        "seed": config.sampler.seed,
        "subsample_seed": config.data.subsample_seed,
        "data": {
            "path": data_path.display().to_string(),
            "sha256": sha256_file(data_path)?,
            "rows_read": rows_read,
            "rows_used": data.row_count(),
        },
        "observations": {
            "count": observations.n_rows(),
            "aggregated": aggregate,
            "fingerprint": observation_fingerprint(observations),
        },
        "model": {
            "family": family.cli_name(),
            "parameters": samples.param_names,
        },
        "sampler": {
            "divergent": divergent,
            "step_size": samples.adaptation.iter().map(|a| a.step_size).collect::<Vec<_>>(),
            "threads": rayon::current_num_threads(),
        },
        "timing": {
            "started_unix": started_unix,
            "sampling_seconds": sampling_seconds,
            "total_seconds": started.elapsed().as_secs_f64(),
        },
        "config": serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
    });
    write_file(&manifest_path, json_string(&manifest, &manifest_path)?)?;
    info!("wrote fit to {}", out.display());

    print_summary(&table, config.output.format)?;
    if config.output.format == OutputFormat::Text {
        println!();
        print!("{}", loo.to_text());
    }
    Ok(())
}

fn read_draws(dir: &Path) -> Result<DrawsFile> {
    read_draws_csv(dir.join("draws.csv"))
}

pub fn summary(dir: &Path, format: OutputFormat) -> Result<()> {
    let draws = read_draws(dir)?;
    let table = summarize_named(&draws.param_names, draws.draws.view())?;
    print_summary(&table, format)
}

struct FitRecord {
    name: String,
    loo: LooResult,
    fingerprint: String,
}

fn read_fit_record(dir: &Path) -> Result<FitRecord> {
    let loo = LooResult::from_json(&read_text(&dir.join("loo.json"))?)?;
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&read_text(&manifest_path)?).map_err(|e| Error::Format {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
    let fingerprint = manifest["observations"]["fingerprint"]
        .as_str()
        .ok_or_else(|| Error::Format {
            path: manifest_path.clone(),
            message: "missing observations.fingerprint".into(),
        })?
        .to_string();
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(FitRecord {
        name,
        loo,
        fingerprint,
    })
}

pub fn compare(dirs: &[PathBuf], format: OutputFormat, out: Option<&Path>) -> Result<()> {
    if dirs.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two fit directories".into(),
        ));
    }
    let mut records = dirs
        .iter()
        .map(|d| read_fit_record(d))
        .collect::<Result<Vec<_>>>()?;
    let reference = &records[0].fingerprint;
    for (dir, r) in dirs.iter().zip(&records).skip(1) {
        if r.fingerprint != *reference {
            return Err(Error::Comparison(format!(
                "{} was fit to different observations than {}",
                dir.display(),
                dirs[0].display()
            )));
        }
    }
    let unique: BTreeSet<&String> = records.iter().map(|r| &r.name).collect();
    if unique.len() < records.len() {
        for (dir, r) in dirs.iter().zip(records.iter_mut()) {
            r.name = dir.display().to_string();
        }
    }
    let inputs: Vec<(String, LooResult)> = records.into_iter().map(|r| (r.name, r.loo)).collect();
    let result = compare_loo(&inputs)?;
    match format {
        OutputFormat::Text => print!("{}", result.to_text()),
        OutputFormat::Csv => {
            println!("{FORMAT_HEADER_COMPARE}");
            println!("model,elpd_loo,elpd_diff,se_diff");
            for r in &result.rows {
                println!("{},{},{},{}", r.name, r.elpd_loo, r.elpd_diff, r.se_diff);
            }
        }
        OutputFormat::Json => println!("{}", result.to_json()?),
    }
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_file(
            &out.join("comparison.txt"),
            format!("{FORMAT_HEADER_COMPARE}\n{}", result.to_text()),
        )?;
        write_file(&out.join("comparison.json"), result.to_json()?)?;
    }
    Ok(())
}

pub fn predict(fit_dir: &Path, config: &RunConfig, out: Option<&Path>) -> Result<()> {
    let data_path = config.data_path()?;
    let plan = EncodingPlan::from_toml(&read_text(&fit_dir.join("encoding.toml"))?)?;
    let spec = ModelSpec::from_toml(&read_text(&fit_dir.join("model.toml"))?)?;
    let draws = read_draws(fit_dir)?;
    if draws.param_names.len() != spec.dim() {
        return Err(Error::Shape(format!(
            "{} has {} parameters but the model has {}",
            fit_dir.join("draws.csv").display(),
            draws.param_names.len(),
            spec.dim()
        )));
    }
    let data = parse_csv(data_path, &Schema::new_bookings())?;
    if data.is_empty() {
        return Err(Error::Empty("new bookings"));
    }
    let x = plan.encode_predictors(&data)?;
    let flat = draws.flat_draws();
    let mode = config.predict.mode;
    let rows = prediction_table(&spec, flat.view(), &x, mode, config.predict.seed)?;
    match config.output.format {
        OutputFormat::Text => print!("{}", predictions_text(&rows, mode)),
        OutputFormat::Csv => write_predictions_csv(&rows, mode, std::io::stdout().lock())?,
        OutputFormat::Json => println!("{}", predictions_json(&rows, mode)?),
    }
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_predictions_csv(&rows, mode, create(&out.join("predictions.csv"))?)?;
        write_file(
            &out.join("predictions.json"),
            predictions_json(&rows, mode)?,
        )?;
    }
    Ok(())
}

pub fn simulate(config: &RunConfig) -> Result<()> {
    let spec = &config.simulate;
    let sim = simulate_bookings(spec)?;
    let out = &config.output.dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv_path = out.join("simulated.csv");
    let mut file = create(&csv_path)?;
    sim.data.write_csv(&mut file)?;
    file.flush().map_err(|e| Error::io(&csv_path, e))?;
    write_file(&out.join("truth.toml"), spec.to_toml()?)?;
    println!(
        "wrote {} bookings to {}",
        sim.data.row_count(),
        csv_path.display()
    );
    Ok(())
}
