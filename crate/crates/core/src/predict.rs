//! Posterior-predictive summaries for new bookings.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkernels::{mean_sd, quantile_sorted, sigmoid};
use crate::model::ModelSpec;
use crate::sampler::chain_rng;

pub const FORMAT_HEADER_PREDICTIONS: &str = "# bayes-cancel predictions v1";

/// What the per-draw predictive values are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// One simulated 0/1 outcome per draw.
    #[default]
    Binary,
    /// The success probability μ of each draw.
    Probability,
}

impl PredictMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Some(PredictMode::Binary),
            "probability" | "prob" => Some(PredictMode::Probability),
            _ => None,
        }
    }
}

fn check_layout(spec: &ModelSpec, draws: ArrayView2<f64>, n_cols: usize) -> Result<()> {
    if draws.ncols() != spec.dim() {
        return Err(Error::Shape(format!(
            "draws have {} parameters, model expects {}",
            draws.ncols(),
            spec.dim()
        )));
    }
    if n_cols != spec.n_coefficients {
        return Err(Error::Shape(format!(
            "new booking has {n_cols} encoded columns, model was fit with {}",
            spec.n_coefficients
        )));
    }
    if draws.nrows() == 0 {
        return Err(Error::Empty("posterior draws"));
    }
    Ok(())
}

fn epred_unchecked(spec: &ModelSpec, draws: ArrayView2<f64>, x: &[f64]) -> Vec<f64> {
    draws
        .rows()
        .into_iter()
        .map(|theta| {
            let eta: f64 = theta
                .iter()
                .take(spec.n_coefficients)
                .zip(x)
                .map(|(b, v)| b * v)
                .sum();
            sigmoid(eta)
        })
        .collect()
}

/// Per-draw cancellation probability μ_s = sigmoid(x·β_s) for one encoded
/// row; `draws` is S × dim on the unconstrained scale.
pub fn posterior_epred(spec: &ModelSpec, draws: ArrayView2<f64>, x: &[f64]) -> Result<Vec<f64>> {
    check_layout(spec, draws, x.len())?;
    Ok(epred_unchecked(spec, draws, x))
}

/// One Bernoulli(μ_s) outcome per draw. For a single booking the
/// beta-binomial family reduces to the same Bernoulli draw.
pub fn posterior_predict<R: Rng>(
    spec: &ModelSpec,
    draws: ArrayView2<f64>,
    x: &[f64],
    rng: &mut R,
) -> Result<Vec<u8>> {
    let mu = posterior_epred(spec, draws, x)?;
    Ok(mu
        .into_iter()
        .map(|m| u8::from(rng.random::<f64>() < m))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    /// 1-based position in the new-booking file.
    pub row: usize,
    pub estimate: f64,
    pub est_error: f64,
    pub q2_5: f64,
    pub q97_5: f64,
}

/// Nearest-rank quantile: the smallest value whose empirical CDF reaches p.
fn quantile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Summarizes the posterior predictive of every row of `new_x`.
///
/// Binary mode reports outcome frequencies; its interval uses nearest-rank
/// quantiles so the bounds stay in {0, 1}. Probability mode summarizes μ
/// with interpolated quantiles. Row i draws outcomes from RNG stream i of
/// `seed`, so the table does not depend on thread scheduling.
pub fn prediction_table(
    spec: &ModelSpec,
    draws: ArrayView2<f64>,
    new_x: &Array2<f64>,
    mode: PredictMode,
    seed: u64,
) -> Result<Vec<PredictionRow>> {
    if new_x.nrows() == 0 {
        return Err(Error::Empty("new bookings"));
    }
    check_layout(spec, draws, new_x.ncols())?;
    (0..new_x.nrows())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = new_x.row(i).to_vec();
            let mu = epred_unchecked(spec, draws, &x);
            let (values, binary) = match mode {
                PredictMode::Probability => (mu, false),
                PredictMode::Binary => {
                    let mut rng = chain_rng(seed, i);
                    let outcomes = mu
                        .into_iter()
                        .map(|m| f64::from(u8::from(rng.random::<f64>() < m)))
                        .collect();
                    (outcomes, true)
                }
            };
            let (estimate, est_error) = mean_sd(&values);
            let mut sorted = values;
            sorted.sort_by(f64::total_cmp);
            let (q2_5, q97_5) = if binary {
                (
                    quantile_nearest_rank(&sorted, 0.025),
                    quantile_nearest_rank(&sorted, 0.975),
                )
            } else {
                (
                    quantile_sorted(&sorted, 0.025)?,
                    quantile_sorted(&sorted, 0.975)?,
                )
            };
            Ok(PredictionRow {
                row: i + 1,
                estimate,
                est_error,
                q2_5,
                q97_5,
            })
        })
        .collect()
}

fn fmt_bound(v: f64, mode: PredictMode) -> String {
    match mode {
        PredictMode::Binary => format!("{v:.0}"),
        PredictMode::Probability => format!("{v:.5}"),
    }
}

/// Aligned text with the row index and four statistic columns.
pub fn predictions_text(rows: &[PredictionRow], mode: PredictMode) -> String {
    let header = ["", "Estimate", "Est. Error", "Q2.5", "Q97.5"].map(String::from);
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.row.to_string(),
                format!("{:.5}", r.estimate),
                format!("{:.5}", r.est_error),
                fmt_bound(r.q2_5, mode),
                fmt_bound(r.q97_5, mode),
            ]
        })
        .collect();
    let mut widths = header.clone().map(|h| h.len());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&cells) {
        let mut line = String::new();
        for (j, (c, w)) in row.iter().zip(&widths).enumerate() {
            if j > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{c:>w$}");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// CSV at full precision with a format header line.
pub fn write_predictions_csv<W: Write>(
    rows: &[PredictionRow],
    mode: PredictMode,
    mut out: W,
) -> Result<()> {
    let mode_name = match mode {
        PredictMode::Binary => "binary",
        PredictMode::Probability => "probability",
    };
    writeln!(out, "{FORMAT_HEADER_PREDICTIONS} mode={mode_name}")
        .map_err(|e| Error::io("<predictions>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "estimate", "est_error", "q2_5", "q97_5"])?;
    for r in rows {
        w.write_record([
            r.row.to_string(),
            r.estimate.to_string(),
            r.est_error.to_string(),
            r.q2_5.to_string(),
            r.q97_5.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub fn predictions_json(rows: &[PredictionRow], mode: PredictMode) -> Result<String> {
    serde_json::to_string_pretty(&serde_json::json!({
        "format_version": "bayes-cancel predictions v1",
        "mode": mode,
        "rows": rows,
    }))
    .map_err(|e| Error::Format {
        path: "<predictions>".into(),
        message: e.to_string(),
    })
}
