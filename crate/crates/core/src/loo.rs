//! Pareto-smoothed importance-sampling leave-one-out cross-validation.
//!
//! For observation i the importance ratios of the full-data draws are
//! 1 / p(y_i | θ_s). The largest ratios are replaced by expected order
//! statistics of a generalized Pareto fit to their exceedances and the result
//! is truncated at the largest raw ratio. The fitted shape k̂ is the
//! reliability diagnostic: above 0.7 the estimate is untrustworthy.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkernels::log_sum_exp;

/// Draw count below which the tail fit is skipped.
pub const MIN_PSIS_DRAWS: usize = 25;
pub const K_THRESHOLD: f64 = 0.7;
/// Reported in place of k̂ when it is undefined (flat tails, too few draws).
pub const K_UNDEFINED: f64 = -1e9;
const MIN_TAIL_LEN: usize = 5;

/// Shape and scale of a generalized Pareto fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub k: f64,
    pub sigma: f64,
}

/// Profile-likelihood fit of a zero-location generalized Pareto to sorted
/// positive exceedances, with the weakly informative shrinkage of k toward
/// 0.5 used for importance-ratio tails.
pub fn gpd_fit(sorted: &[f64]) -> GpdFit {
    const PRIOR: f64 = 3.0;
    const MIN_GRID: usize = 30;
    let n = sorted.len();
    let nf = n as f64;
    let m = MIN_GRID + nf.sqrt().floor() as usize;
    let x_star = sorted[((nf / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let x_max = sorted[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / PRIOR / x_star)
        .collect();
    let profile = |t: f64| {
        let k = sorted.iter().map(|&x| (-t * x).ln_1p()).sum::<f64>() / nf;
        nf * ((-t / k).ln() - k - 1.0)
    };
    let l_theta: Vec<f64> = theta.iter().map(|&t| profile(t)).collect();
    let theta_hat = match log_sum_exp(&l_theta) {
        Ok(norm) if norm.is_finite() => theta
            .iter()
            .zip(&l_theta)
            .map(|(t, l)| t * (l - norm).exp())
            .sum::<f64>(),
        _ => f64::NAN,
    };
    let k = sorted
        .iter()
        .map(|&x| (-theta_hat * x).ln_1p())
        .sum::<f64>()
        / nf;
    let sigma = -k / theta_hat;
    GpdFit {
        k: k * nf / (nf + 10.0) + 10.0 * 0.5 / (nf + 10.0),
        sigma,
    }
}

/// Quantile function of the zero-location generalized Pareto.
pub fn gpd_quantile(p: f64, fit: GpdFit) -> f64 {
    if fit.k == 0.0 {
        -fit.sigma * (-p).ln_1p()
    } else {
        fit.sigma * (-fit.k * (-p).ln_1p()).exp_m1() / fit.k
    }
}

/// Number of ratios in the smoothed tail for S draws.
pub fn tail_length(s: usize) -> usize {
    let sf = s as f64;
    (0.2 * sf).min(3.0 * sf.sqrt()).ceil() as usize
}

/// Smoothed, normalized log-weights and the tail shape estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub log_weights: Vec<f64>,
    pub k_hat: f64,
}

impl Smoothed {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }
}

fn normalize(mut lw: Vec<f64>) -> Result<Vec<f64>> {
    let norm = log_sum_exp(&lw)?;
    lw.iter_mut().for_each(|w| *w -= norm);
    Ok(lw)
}

/// Pareto-smooths one vector of log importance ratios.
///
/// With fewer than 25 ratios the weights are instead truncated at
/// mean(w)·√S, with a warning and an undefined k̂.
pub fn psis_smooth(log_ratios: &[f64]) -> Result<Smoothed> {
    let s = log_ratios.len();
    if s == 0 {
        return Err(Error::Empty("psis_smooth"));
    }
    if let Some(&v) = log_ratios.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            function: "psis_smooth",
            value: v,
            domain: "finite log ratios",
        });
    }
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();

    if s < MIN_PSIS_DRAWS {
        log::warn!(
            "{s} draws are too few for Pareto smoothing; using truncated importance sampling"
        );
        let cap = log_sum_exp(&lw)? - 0.5 * (s as f64).ln();
        lw.iter_mut().for_each(|w| *w = w.min(cap));
        return Ok(Smoothed {
            log_weights: normalize(lw)?,
            k_hat: K_UNDEFINED,
        });
    }

    let k_hat = smooth_tail(&mut lw);
    Ok(Smoothed {
        log_weights: normalize(lw)?,
        k_hat,
    })
}

/// Replaces the upper tail of `lw` (maximum 0) in place and truncates at 0;
/// returns k̂.
fn smooth_tail(lw: &mut [f64]) -> f64 {
    let s = lw.len();
    let m = tail_length(s);
    let mut k_hat = K_UNDEFINED;
    if m >= MIN_TAIL_LEN && m < s {
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        let tail_ids = &order[s - m..];
        let lo = lw[tail_ids[0]];
        let hi = lw[tail_ids[m - 1]];
        if (hi - lo).abs() >= f64::EPSILON / 100.0 {
            let cutoff = lw[order[s - m - 1]];
            let exp_cutoff = cutoff.exp();
            let exceedances: Vec<f64> =
                tail_ids.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
            let fit = gpd_fit(&exceedances);
            if fit.k.is_finite() && fit.sigma.is_finite() {
                for (j, &i) in tail_ids.iter().enumerate() {
                    let p = (j as f64 + 0.5) / m as f64;
                    lw[i] = (gpd_quantile(p, fit) + exp_cutoff).ln();
                }
                k_hat = fit.k;
            }
        }
    }
    lw.iter_mut().for_each(|w| *w = w.min(0.0));
    k_hat
}

/// Leave-one-out estimate for one row of pointwise log-likelihoods.
fn loo_row(loglik: ArrayView1<f64>) -> Result<(f64, f64)> {
    let ll: Vec<f64> = loglik.iter().copied().collect();
    let ratios: Vec<f64> = ll.iter().map(|v| -v).collect();
    let smoothed = psis_smooth(&ratios)?;
    let terms: Vec<f64> = smoothed
        .log_weights
        .iter()
        .zip(&ll)
        .map(|(w, l)| w + l)
        .collect();
    Ok((log_sum_exp(&terms)?, smoothed.k_hat))
}

fn se_of_sum(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (n * var).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub elpd_loo: f64,
    pub se_elpd: f64,
    /// In-sample log pointwise predictive density.
    pub lpd: f64,
    /// Effective number of parameters, lpd − elpd_loo.
    pub p_loo: f64,
    pub pointwise_elpd: Vec<f64>,
    pub pareto_k: Vec<f64>,
    pub n_high_k: usize,
}

impl LooResult {
    pub fn n_obs(&self) -> usize {
        self.pointwise_elpd.len()
    }
}

/// PSIS-LOO from an N × S matrix of pointwise log-likelihoods.
pub fn elpd_loo(loglik: &Array2<f64>) -> Result<LooResult> {
    let (n, s) = loglik.dim();
    if n == 0 || s == 0 {
        return Err(Error::Empty("elpd_loo"));
    }
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| loo_row(loglik.row(i)))
        .collect::<Result<_>>()?;
    let pointwise_elpd: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let pareto_k: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let lpd = loglik
        .rows()
        .into_iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().copied().collect();
            log_sum_exp(&v).map(|l| l - (s as f64).ln())
        })
        .sum::<Result<f64>>()?;
    let n_high_k = pareto_k.iter().filter(|&&k| k > K_THRESHOLD).count();
    if n_high_k > 0 {
        log::warn!("{n_high_k} of {n} observations have Pareto k > {K_THRESHOLD}; their LOO estimates are unreliable");
    }
    let elpd = pointwise_elpd.iter().sum::<f64>();
    Ok(LooResult {
        elpd_loo: elpd,
        se_elpd: se_of_sum(&pointwise_elpd),
        lpd,
        p_loo: lpd - elpd,
        pointwise_elpd,
        pareto_k,
        n_high_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub elpd_loo: f64,
    pub elpd_diff: f64,
    pub se_diff: f64,
}

/// Models ordered best first, differences relative to the best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
}

/// Ranks models by elpd_loo. All results must cover the same observations.
pub fn compare(results: &[(String, LooResult)]) -> Result<CompareResult> {
    let Some((_, first)) = results.first() else {
        return Err(Error::Empty("compare"));
    };
    let n = first.n_obs();
    for (name, r) in results {
        if r.n_obs() != n {
            return Err(Error::Comparison(format!(
                "model {name:?} has {} observations, expected {n}",
                r.n_obs()
            )));
        }
    }
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[b].1.elpd_loo.total_cmp(&results[a].1.elpd_loo));
    let best = &results[order[0]].1;
    let rows = order
        .iter()
        .map(|&i| {
            let (name, r) = &results[i];
            let (elpd_diff, se_diff) = if i == order[0] {
                (0.0, 0.0)
            } else {
                let diff: Vec<f64> = r
                    .pointwise_elpd
                    .iter()
                    .zip(&best.pointwise_elpd)
                    .map(|(a, b)| a - b)
                    .collect();
                (r.elpd_loo - best.elpd_loo, se_of_sum(&diff))
            };
            CompareRow {
                name: name.clone(),
                elpd_loo: r.elpd_loo,
                elpd_diff,
                se_diff,
            }
        })
        .collect();
    Ok(CompareResult { rows })
}

impl CompareResult {
    /// Three aligned columns with one decimal.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    format!("{:.1}", r.elpd_diff),
                    format!("{:.1}", r.se_diff),
                ]
            })
            .collect();
        let header = [
            "Model".to_string(),
            "elpd_diff".to_string(),
            "se_diff".to_string(),
        ];
        let mut widths = header.clone().map(|h| h.len());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&cells) {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}",
                row[0],
                row[1],
                row[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&serde_json::json!({
            "format_version": "bayes-cancel compare v1",
            "rows": self.rows,
        }))
        .map_err(|e| Error::Format {
            path: "<compare>".into(),
            message: e.to_string(),
        })
    }
}

impl LooResult {
    /// Structured JSON with a `format_version` field; undefined k̂ is kept
    /// as the finite sentinel.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&serde_json::json!({
            "format_version": "bayes-cancel loo v1",
            "elpd_loo": self.elpd_loo,
            "se_elpd": self.se_elpd,
            "lpd": self.lpd,
            "p_loo": self.p_loo,
            "n_high_k": self.n_high_k,
            "pointwise_elpd": self.pointwise_elpd,
            "pareto_k": self.pareto_k,
        }))
        .map_err(|e| Error::Format {
            path: "<loo>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Stored {
            format_version: String,
            elpd_loo: f64,
            se_elpd: f64,
            lpd: f64,
            p_loo: f64,
            n_high_k: usize,
            pointwise_elpd: Vec<f64>,
            pareto_k: Vec<f64>,
        }
        let bad = |message: String| Error::Format {
            path: "<loo>".into(),
            message,
        };
        let s: Stored = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if s.format_version != "bayes-cancel loo v1" {
            return Err(bad(format!(
                "unsupported format_version {:?}",
                s.format_version
            )));
        }
        Ok(LooResult {
            elpd_loo: s.elpd_loo,
            se_elpd: s.se_elpd,
            lpd: s.lpd,
            p_loo: s.p_loo,
            pointwise_elpd: s.pointwise_elpd,
            pareto_k: s.pareto_k,
            n_high_k: s.n_high_k,
        })
    }

    /// Text report: totals plus the Pareto k tally.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10}{:>10}{:>8}", "", "Estimate", "SE");
        let _ = writeln!(
            out,
            "{:<10}{:>10.1}{:>8.1}",
            "elpd_loo", self.elpd_loo, self.se_elpd
        );
        let _ = writeln!(out, "{:<10}{:>10.1}", "p_loo", self.p_loo);
        let _ = writeln!(
            out,
            "Pareto k > {K_THRESHOLD}: {} of {} observations",
            self.n_high_k,
            self.n_obs()
        );
        out
    }
}
