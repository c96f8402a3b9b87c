//! Convergence diagnostics and posterior summaries.
//!
//! R-hat and ESS follow the rank-normalized split-chain definitions: every
//! chain is halved, all draws are jointly replaced by normal scores of their
//! ranks, and the classic statistics are computed on the result. Bulk R-hat
//! is combined with the folded variant (absolute deviations of the normal
//! scores from their median) so that chains differing only in scale are
//! caught too. Both parts depend on the draws only through their ranks.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkernels::{normal_quantile, quantile_sorted};
use crate::model::{ModelSpec, LOG_PHI, PHI};
use crate::sampler::SampleSet;

pub const FORMAT_HEADER_SUMMARY: &str = "# bayes-cancel summary v1";
/// Effective sample sizes below this are flagged.
pub const ESS_WARN_THRESHOLD: f64 = 400.0;
/// ESS is capped at this multiple of the total draw count.
pub const ESS_CAP_FACTOR: f64 = 1.5;

fn is_constant(x: ArrayView2<f64>) -> bool {
    let first = x.iter().next().copied().unwrap_or(0.0);
    x.iter().all(|&v| v == first)
}

fn check_draws(draws: ArrayView2<f64>, what: &str) -> Result<()> {
    let (chains, iters) = draws.dim();
    if chains == 0 || iters < 8 {
        return Err(Error::Shape(format!(
            "{what} needs at least 1 chain of 8 draws, got {chains} x {iters}"
        )));
    }
    if let Some(v) = draws.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            function: "diagnostics",
            value: *v,
            domain: "finite draws",
        });
    }
    Ok(())
}

/// Splits each chain in half; with an odd length the middle draw is dropped.
pub fn split_chains(draws: ArrayView2<f64>) -> Array2<f64> {
    let (chains, iters) = draws.dim();
    let half = iters / 2;
    let mut out = Array2::zeros((2 * chains, half));
    for c in 0..chains {
        for i in 0..half {
            out[[2 * c, i]] = draws[[c, i]];
            out[[2 * c + 1, i]] = draws[[c, iters - half + i]];
        }
    }
    out
}

/// Average ranks (1-based) of all entries, ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Normal scores Φ⁻¹((r − 3/8)/(S + 1/4)) of the jointly ranked draws.
pub fn rank_normalize(draws: ArrayView2<f64>) -> Array2<f64> {
    let flat: Vec<f64> = draws.iter().copied().collect();
    let s = flat.len() as f64;
    // evaluate the lower half and mirror, so ranks r and S+1−r get scores of
    // exactly opposite sign
    let scores: Vec<f64> = average_ranks(&flat)
        .into_iter()
        .map(|r| {
            let mirrored = s + 1.0 - r;
            if r <= mirrored {
                normal_quantile((r - 0.375) / (s + 0.25))
            } else {
                -normal_quantile((mirrored - 0.375) / (s + 0.25))
            }
        })
        .collect();
    Array2::from_shape_vec(draws.dim(), scores).expect("shape preserved")
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Potential scale reduction of already-split chains.
fn rhat_basic(draws: ArrayView2<f64>) -> f64 {
    let n = draws.ncols() as f64;
    let means: Vec<f64> = draws
        .rows()
        .into_iter()
        .map(|r| mean(r.as_slice().unwrap()))
        .collect();
    let within = mean(
        &draws
            .rows()
            .into_iter()
            .map(|r| sample_var(r.as_slice().unwrap()))
            .collect::<Vec<_>>(),
    );
    let between = n * sample_var(&means);
    ((between / within + n - 1.0) / n).sqrt()
}

/// Biased (divisor N) autocovariance of one chain at every lag.
fn autocovariance(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in &mut buf {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n]
        .iter()
        .map(|z| z.re / (size as f64 * n as f64))
        .collect()
}

/// ESS of already-split chains using Geyer's initial monotone sequence.
fn ess_basic(draws: ArrayView2<f64>) -> f64 {
    let (chains, n) = draws.dim();
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = draws
        .rows()
        .into_iter()
        .map(|r| autocovariance(r.as_slice().unwrap(), &mut planner))
        .collect();
    let means: Vec<f64> = draws
        .rows()
        .into_iter()
        .map(|r| mean(r.as_slice().unwrap()))
        .collect();
    let nf = n as f64;
    let mean_var = acov.iter().map(|a| a[0]).sum::<f64>() / chains as f64 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if chains > 1 {
        var_plus += sample_var(&means);
    }
    let lag_mean = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / chains as f64;
    let rho_at = |t: usize| 1.0 - (mean_var - lag_mean(t)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    rho[1] = rho_odd;
    let mut t = 0;
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        t += 2;
        rho_even = rho_at(t);
        rho_odd = rho_at(t + 1);
        if rho_even + rho_odd >= 0.0 {
            rho[t] = rho_even;
            rho[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t] = rho_even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            rho[t] = (rho[t - 2] + rho[t - 1]) / 2.0;
            rho[t + 1] = rho[t];
        }
    }
    let total = (chains * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t];
    let tau = tau.max(1.0 / total.log10().min(ESS_CAP_FACTOR));
    total / tau
}

/// Rank-normalized split R-hat: the larger of the bulk and folded values.
///
/// Constant draws give NaN with a warning.
pub fn split_rank_rhat(draws: ArrayView2<f64>) -> Result<f64> {
    check_draws(draws, "split_rank_rhat")?;
    if is_constant(draws) {
        log::warn!("R-hat is undefined for constant draws");
        return Ok(f64::NAN);
    }
    let z = rank_normalize(split_chains(draws).view());
    let bulk = rhat_basic(z.view());
    let mut sorted: Vec<f64> = z.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5)?;
    let folded = z.mapv(|v| (v - median).abs());
    let tail = rhat_basic(rank_normalize(folded.view()).view());
    Ok(bulk.max(tail))
}

/// Bulk effective sample size of rank-normalized split chains.
pub fn ess_bulk(draws: ArrayView2<f64>) -> Result<f64> {
    check_draws(draws, "ess_bulk")?;
    if is_constant(draws) {
        log::warn!("ESS is undefined for constant draws");
        return Ok(f64::NAN);
    }
    Ok(ess_basic(rank_normalize(split_chains(draws).view()).view()))
}

/// Tail effective sample size: the smaller of the ESS of the indicators of
/// falling below the 5% and above the 95% quantile.
pub fn ess_tail(draws: ArrayView2<f64>) -> Result<f64> {
    check_draws(draws, "ess_tail")?;
    if is_constant(draws) {
        log::warn!("ESS is undefined for constant draws");
        return Ok(f64::NAN);
    }
    let mut sorted: Vec<f64> = draws.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let q05 = quantile_sorted(&sorted, 0.05)?;
    let q95 = quantile_sorted(&sorted, 0.95)?;
    let ess_indicator = |below: bool| {
        let ind = split_chains(draws).mapv(|v| {
            let hit = if below { v <= q05 } else { v >= q95 };
            f64::from(u8::from(hit))
        });
        if is_constant(ind.view()) {
            f64::NAN
        } else {
            ess_basic(ind.view())
        }
    };
    Ok(ess_indicator(true).min(ess_indicator(false)))
}

/// One row of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub estimate: f64,
    pub est_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

impl SummaryRow {
    /// Summarizes a chains × iterations array of one parameter.
    pub fn from_draws(name: impl Into<String>, draws: ArrayView2<f64>) -> Result<Self> {
        let name = name.into();
        let flat: Vec<f64> = draws.iter().copied().collect();
        if flat.is_empty() {
            return Err(Error::Empty("summarize"));
        }
        let n = flat.len() as f64;
        let estimate = flat.iter().sum::<f64>() / n;
        let est_error = if flat.len() > 1 {
            (flat.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = flat;
        sorted.sort_by(f64::total_cmp);
        let (rhat, ess_bulk, ess_tail) = if is_constant(draws) {
            log::warn!("{name}: draws are constant; R-hat and ESS are undefined");
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (
                split_rank_rhat(draws)?,
                self::ess_bulk(draws)?,
                self::ess_tail(draws)?,
            )
        };
        Ok(SummaryRow {
            ci_lower: quantile_sorted(&sorted, 0.025)?,
            ci_upper: quantile_sorted(&sorted, 0.975)?,
            name,
            estimate,
            est_error,
            rhat,
            ess_bulk,
            ess_tail,
        })
    }

    pub fn low_ess(&self) -> bool {
        self.ess_bulk < ESS_WARN_THRESHOLD || self.ess_tail < ESS_WARN_THRESHOLD
    }
}

/// Coefficient table in parameter order, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

const COLUMNS: [&str; 8] = [
    "Variable",
    "Estimate",
    "Est.Error",
    "95% CI Lower",
    "95% CI Upper",
    "Rhat",
    "ESS Bulk",
    "ESS Tail",
];

fn fmt_count(v: f64) -> String {
    if v.is_finite() {
        format!("{:.0}", v.floor())
    } else {
        "NA".to_string()
    }
}

fn fmt_2(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.2}")
    }
}

impl SummaryTable {
    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn max_rhat(&self) -> f64 {
        self.rows.iter().map(|r| r.rhat).fold(f64::NAN, f64::max)
    }

    /// Logs one warning per parameter with ESS below the threshold and
    /// returns their names.
    pub fn warn_low_ess(&self) -> Vec<String> {
        let mut flagged = Vec::new();
        for row in self.rows.iter().filter(|r| r.low_ess()) {
            log::warn!(
                "{}: ESS bulk {} / tail {} below {ESS_WARN_THRESHOLD}",
                row.name,
                fmt_count(row.ess_bulk),
                fmt_count(row.ess_tail)
            );
            flagged.push(row.name.clone());
        }
        flagged
    }

    /// Aligned text with two decimals and whole-number ESS.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    fmt_2(r.estimate),
                    fmt_2(r.est_error),
                    fmt_2(r.ci_lower),
                    fmt_2(r.ci_upper),
                    fmt_2(r.rhat),
                    fmt_count(r.ess_bulk),
                    fmt_count(r.ess_tail),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            let _ = write!(out, "{:<w$}", row[0], w = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        };
        let header: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, row);
        }
        out
    }

    /// CSV at full precision with a format header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FORMAT_HEADER_SUMMARY}").map_err(|e| Error::io("<summary>", e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "name",
            "estimate",
            "est_error",
            "ci_lower",
            "ci_upper",
            "rhat",
            "ess_bulk",
            "ess_tail",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.estimate.to_string(),
                r.est_error.to_string(),
                r.ci_lower.to_string(),
                r.ci_upper.to_string(),
                r.rhat.to_string(),
                r.ess_bulk.to_string(),
                r.ess_tail.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input
            .read_to_string(&mut text)
            .map_err(|e| Error::io("<summary>", e))?;
        let body = text
            .strip_prefix(FORMAT_HEADER_SUMMARY)
            .ok_or_else(|| Error::Format {
                path: "<summary>".into(),
                message: format!("missing header {FORMAT_HEADER_SUMMARY:?}"),
            })?;
        let mut rdr = csv::Reader::from_reader(body.trim_start().as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Format {
                    path: "<summary>".into(),
                    message: format!("bad number {:?}", &rec[i]),
                })
            };
            rows.push(SummaryRow {
                name: rec[0].to_string(),
                estimate: num(1)?,
                est_error: num(2)?,
                ci_lower: num(3)?,
                ci_upper: num(4)?,
                rhat: num(5)?,
                ess_bulk: num(6)?,
                ess_tail: num(7)?,
            });
        }
        Ok(SummaryTable { rows })
    }

    /// Structured JSON with a `format_version` field. NaN becomes null.
    pub fn to_json(&self) -> Result<String> {
        let num = |v: f64| {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::Value::Null
            }
        };
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "name": r.name,
                    "estimate": num(r.estimate),
                    "est_error": num(r.est_error),
                    "ci_lower": num(r.ci_lower),
                    "ci_upper": num(r.ci_upper),
                    "rhat": num(r.rhat),
                    "ess_bulk": num(r.ess_bulk),
                    "ess_tail": num(r.ess_tail),
                })
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "format_version": "bayes-cancel summary v1",
            "rows": rows,
        }))
        .map_err(|e| Error::Format {
            path: "<summary>".into(),
            message: e.to_string(),
        })
    }
}

/// Summarizes named chains × iterations arrays.
pub fn summarize_draws(params: &[(String, Array2<f64>)]) -> Result<SummaryTable> {
    let rows = params
        .iter()
        .map(|(name, draws)| SummaryRow::from_draws(name.clone(), draws.view()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryTable { rows })
}

/// Summarizes a fit on the natural scale: `log_phi` is reported as `phi`.
pub fn summarize(samples: &SampleSet, spec: &ModelSpec) -> Result<SummaryTable> {
    if samples.dim() != spec.dim() {
        return Err(Error::Shape(format!(
            "draws have {} parameters, model expects {}",
            samples.dim(),
            spec.dim()
        )));
    }
    summarize_named(&samples.param_names, samples.draws.view())
}

/// As [`summarize`] for chains × iterations × dim draws with their names.
pub fn summarize_named(names: &[String], draws: ArrayView3<f64>) -> Result<SummaryTable> {
    if draws.is_empty() {
        return Err(Error::Empty("summarize"));
    }
    if names.len() != draws.len_of(Axis(2)) {
        return Err(Error::Shape(format!(
            "{} names for {} parameters",
            names.len(),
            draws.len_of(Axis(2))
        )));
    }
    let params: Vec<(String, Array2<f64>)> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let d = draws.index_axis(Axis(2), j).to_owned();
            if name == LOG_PHI {
                (PHI.to_string(), d.mapv(f64::exp))
            } else {
                (name.clone(), d)
            }
        })
        .collect();
    let table = summarize_draws(&params)?;
    table.warn_low_ess();
    Ok(table)
}
