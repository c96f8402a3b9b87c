//! Likelihood families, priors and the joint log-posterior.
//!
//! Parameters live on an unconstrained vector laid out as
//! `[β₀, β₁ … β_{P−1}]` for the Bernoulli-logit family and
//! `[β₀, β₁ … β_{P−1}, log φ]` for the beta-binomial family. The linear
//! predictor is `η = Xβ` and the success probability `μ = sigmoid(η)`.
//!
//! The beta-binomial family uses the mean/precision link `α = μφ`,
//! `β = (1 − μ)φ`. Its log-PMF is evaluated through the rising-factorial
//! identity
//!
//! ```text
//! ln B(y + α, n − y + β) − ln B(α, β)
//!     = Σ_{j<y} ln(α + j) + Σ_{j<n−y} ln(β + j) − Σ_{j<n} ln(φ + j)
//! ```
//!
//! with `ln α = ln φ + ln sigmoid(η)` kept in log space, so the value stays
//! finite when `μ` saturates. Large trial counts switch to log-gamma
//! differences.

use std::ops::Deref;

use ndarray::{s, Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DesignMatrix;
use crate::mathkernels::{self, log_sigmoid, normal_log_density, pairwise_sum, sigmoid};
use crate::sampler::{chain_rng, sample, LogDensity, SampleSet, SamplerConfig};

pub const LOG_PHI: &str = "log_phi";
pub const PHI: &str = "phi";

/// Above this trial count the beta-binomial terms use log-gamma differences.
const SMALL_TRIALS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BernoulliLogit,
    BetaBinomialLogit,
}

impl Family {
    pub fn parse(name: &str) -> Option<Family> {
        match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "logistic" | "bernoulli" | "bernoulli-logit" => Some(Family::BernoulliLogit),
            "beta-binomial" | "beta-binomial-logit" | "betabinomial" => {
                Some(Family::BetaBinomialLogit)
            }
            _ => None,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Family::BernoulliLogit => "logistic",
            Family::BetaBinomialLogit => "beta-binomial",
        }
    }

    pub fn has_phi(self) -> bool {
        self == Family::BetaBinomialLogit
    }

    /// Priors used for this family in the published analysis.
    pub fn default_priors(self) -> PriorSpec {
        match self {
            Family::BernoulliLogit => PriorSpec {
                intercept_mean: 3.5,
                intercept_sd: 1.0,
                slope_mean: 0.0,
                slope_sd: 0.5,
                ..PriorSpec::default()
            },
            Family::BetaBinomialLogit => PriorSpec {
                intercept_mean: 0.0,
                intercept_sd: 5.0,
                slope_mean: 0.0,
                slope_sd: 2.0,
                ..PriorSpec::default()
            },
        }
    }
}

/// Normal priors on the intercept and on every slope, and a gamma prior on
/// the beta-binomial precision φ (on the positive scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub intercept_mean: f64,
    pub intercept_sd: f64,
    pub slope_mean: f64,
    pub slope_sd: f64,
    pub phi_shape: f64,
    pub phi_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            intercept_mean: 0.0,
            intercept_sd: 1.0,
            slope_mean: 0.0,
            slope_sd: 1.0,
            phi_shape: 0.01,
            phi_rate: 0.01,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("intercept_sd", self.intercept_sd),
            ("slope_sd", self.slope_sd),
            ("phi_shape", self.phi_shape),
            ("phi_rate", self.phi_rate),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("prior {name} must be > 0, got {v}")));
            }
        }
        if !self.intercept_mean.is_finite() || !self.slope_mean.is_finite() {
            return Err(Error::Config("prior means must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub priors: PriorSpec,
    /// Number of regression coefficients P, intercept included.
    pub n_coefficients: usize,
}

impl ModelSpec {
    pub fn new(family: Family, priors: PriorSpec, n_coefficients: usize) -> Result<Self> {
        priors.validate()?;
        if n_coefficients == 0 {
            return Err(Error::Shape("a model needs at least the intercept".into()));
        }
        Ok(ModelSpec {
            family,
            priors,
            n_coefficients,
        })
    }

    /// Family defaults for a design with `n_coefficients` columns.
    pub fn with_default_priors(family: Family, n_coefficients: usize) -> Result<Self> {
        Self::new(family, family.default_priors(), n_coefficients)
    }

    /// Unconstrained dimension.
    pub fn dim(&self) -> usize {
        self.n_coefficients + usize::from(self.family.has_phi())
    }

    /// Unconstrained parameter labels.
    pub fn param_names(&self, column_names: &[String]) -> Vec<String> {
        let mut names = column_names.to_vec();
        if self.family.has_phi() {
            names.push(LOG_PHI.to_string());
        }
        names
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, model expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn check_design(&self, dm: &DesignMatrix) -> Result<()> {
        if dm.n_cols() != self.n_coefficients {
            return Err(Error::Shape(format!(
                "design matrix has {} columns, model expects {}",
                dm.n_cols(),
                self.n_coefficients
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.priors.validate()?;
        Ok(spec)
    }
}

/// An unconstrained parameter vector with named accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    has_phi: bool,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        spec.check_theta(&values)?;
        Ok(ParamVector {
            values,
            has_phi: spec.family.has_phi(),
        })
    }

    pub fn intercept(&self) -> f64 {
        self.values[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.values[1..self.coefficients().len()]
    }

    pub fn coefficients(&self) -> &[f64] {
        let p = self.values.len() - usize::from(self.has_phi);
        &self.values[..p]
    }

    pub fn log_phi(&self) -> Option<f64> {
        self.has_phi.then(|| *self.values.last().unwrap())
    }

    pub fn phi(&self) -> Option<f64> {
        self.log_phi().map(f64::exp)
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Sum of the normal log-densities of the coefficients plus, for the
/// beta-binomial family, the gamma log-density of φ and the log-Jacobian
/// `log φ` of the exp transform.
pub fn log_prior(spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    spec.check_theta(theta)?;
    Ok(prior_value_and_grad(spec, theta, None))
}

fn prior_value_and_grad(spec: &ModelSpec, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let pr = &spec.priors;
    let p = spec.n_coefficients;
    let mut value = normal_log_density(theta[0], pr.intercept_mean, pr.intercept_sd);
    for &b in &theta[1..p] {
        value += normal_log_density(b, pr.slope_mean, pr.slope_sd);
    }
    let phi_term = spec.family.has_phi().then(|| {
        let log_phi = theta[p];
        // Gamma(φ | a, b) · φ with φ = e^u, written in u to avoid ln(exp(u)).
        let value = pr.phi_shape * pr.phi_rate.ln() - ln_gamma(pr.phi_shape)
            + pr.phi_shape * log_phi
            - pr.phi_rate * log_phi.exp();
        (value, pr.phi_shape - pr.phi_rate * log_phi.exp())
    });
    if let Some((v, _)) = phi_term {
        value += v;
    }
    if let Some(grad) = grad {
        grad[0] += -(theta[0] - pr.intercept_mean) / (pr.intercept_sd * pr.intercept_sd);
        let slope_var = pr.slope_sd * pr.slope_sd;
        for j in 1..p {
            grad[j] += -(theta[j] - pr.slope_mean) / slope_var;
        }
        if let Some((_, g)) = phi_term {
            grad[p] += g;
        }
    }
    value
}

fn ln_gamma(x: f64) -> f64 {
    mathkernels::log_gamma(x).expect("validated positive argument")
}

fn linear_predictor(dm: &DesignMatrix, coefficients: &[f64]) -> Array1<f64> {
    dm.x.dot(&ndarray::ArrayView1::from(coefficients))
}

/// Bernoulli-logit log-likelihood Σ [y ln μ + (1 − y) ln(1 − μ)].
pub fn log_lik_bernoulli(dm: &DesignMatrix, theta: &[f64]) -> Result<f64> {
    if theta.len() != dm.n_cols() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} design columns",
            theta.len(),
            dm.n_cols()
        )));
    }
    check_single_trials(dm)?;
    let eta = linear_predictor(dm, theta);
    let terms: Vec<f64> = eta
        .iter()
        .zip(&dm.y)
        .map(|(&e, &y)| bernoulli_row(y, e))
        .collect();
    Ok(pairwise_sum(&terms))
}

fn check_single_trials(dm: &DesignMatrix) -> Result<()> {
    if let Some(i) = dm.trials.iter().position(|&t| t != 1) {
        return Err(Error::Family(format!(
            "bernoulli-logit needs one trial per row; row {i} has {}",
            dm.trials[i]
        )));
    }
    Ok(())
}

#[inline]
fn bernoulli_row(y: u32, eta: f64) -> f64 {
    if y == 1 {
        log_sigmoid(eta)
    } else {
        log_sigmoid(-eta)
    }
}

/// Row log-likelihood and its η-derivative y − sigmoid(η) from a single
/// exponential: with t = exp(−|η|), ln sigmoid(±η) = min(±η, 0) − ln(1 + t).
#[inline]
fn bernoulli_row_and_grad(y: u32, eta: f64) -> (f64, f64) {
    let t = (-eta.abs()).exp();
    let log1p_t = t.ln_1p();
    let mu = if eta >= 0.0 {
        1.0 / (1.0 + t)
    } else {
        t / (1.0 + t)
    };
    let z = if y == 1 { eta } else { -eta };
    (z.min(0.0) - log1p_t, y as f64 - mu)
}

/// Beta-binomial log-likelihood with `α = μφ`, `β = (1 − μ)φ`, `logit μ = Xβ`.
/// `theta` carries the coefficients followed by `log φ`.
pub fn log_lik_beta_binomial(dm: &DesignMatrix, theta: &[f64]) -> Result<f64> {
    if theta.len() != dm.n_cols() + 1 {
        return Err(Error::Shape(format!(
            "{} parameters for {} design columns plus log_phi",
            theta.len(),
            dm.n_cols()
        )));
    }
    let log_binom = log_binomials(dm)?;
    let log_phi = theta[dm.n_cols()];
    let eta = linear_predictor(dm, &theta[..dm.n_cols()]);
    let terms: Vec<f64> = (0..dm.n_rows())
        .map(|i| log_binom[i] + bb_row(dm.y[i], dm.trials[i], eta[i], log_phi).value)
        .collect();
    Ok(pairwise_sum(&terms))
}

fn log_binomials(dm: &DesignMatrix) -> Result<Vec<f64>> {
    dm.y.iter()
        .zip(&dm.trials)
        .enumerate()
        .map(|(i, (&y, &n))| {
            if y > n {
                return Err(Error::Data(format!("row {i}: {y} successes in {n} trials")));
            }
            mathkernels::log_binomial(n as u64, y as u64)
        })
        .collect()
}

struct BbTerms {
    /// Log-PMF without the binomial coefficient.
    value: f64,
    d_eta: f64,
    d_log_phi: f64,
}

/// ln(e^log_a + j) for j ≥ 1 without overflowing either way.
#[inline]
fn ln_shifted(log_a: f64, j: f64) -> f64 {
    if log_a > 0.0 {
        log_a + (j * (-log_a).exp()).ln_1p()
    } else {
        (j + log_a.exp()).ln()
    }
}

/// a / (a + j) with a = e^log_a.
#[inline]
fn ratio_shifted(log_a: f64, j: f64) -> f64 {
    if log_a > 0.0 {
        1.0 / (1.0 + j * (-log_a).exp())
    } else {
        let a = log_a.exp();
        a / (a + j)
    }
}

/// Σ_{j<k} ln(a + j) and Σ_{j<k} a/(a + j), i.e. ln Γ(k + a) − ln Γ(a) and
/// a·(ψ(k + a) − ψ(a)).
fn rising_terms(log_a: f64, k: u32, large: bool) -> (f64, f64) {
    if k == 0 {
        return (0.0, 0.0);
    }
    if large {
        let a = log_a.exp();
        let kf = k as f64;
        let value = log_a + ln_gamma(kf + a) - ln_gamma(1.0 + a);
        let digamma_diff = mathkernels::digamma(kf + a).expect("positive")
            - mathkernels::digamma(1.0 + a).expect("positive");
        return (value, 1.0 + a * digamma_diff);
    }
    let mut value = log_a;
    let mut scaled = 1.0;
    for j in 1..k {
        let j = j as f64;
        value += ln_shifted(log_a, j);
        scaled += ratio_shifted(log_a, j);
    }
    (value, scaled)
}

fn bb_row(y: u32, n: u32, eta: f64, log_phi: f64) -> BbTerms {
    let log_alpha = log_phi + log_sigmoid(eta);
    let log_beta = log_phi + log_sigmoid(-eta);
    let large = n > SMALL_TRIALS && log_phi < 500.0;
    let (a_val, a_scaled) = rising_terms(log_alpha, y, large);
    let (b_val, b_scaled) = rising_terms(log_beta, n - y, large);
    let (c_val, c_scaled) = rising_terms(log_phi, n, large);
    let mu = sigmoid(eta);
    let one_minus_mu = sigmoid(-eta);
    BbTerms {
        value: a_val + b_val - c_val,
        d_eta: one_minus_mu * a_scaled - mu * b_scaled,
        d_log_phi: a_scaled + b_scaled - c_scaled,
    }
}

/// The unnormalized log-posterior of one model on one data set, with cached
/// per-row constants. This is what the sampler evaluates.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    spec: &'a ModelSpec,
    dm: &'a DesignMatrix,
    log_binom: Vec<f64>,
    /// Row-major copy of the design matrix.
    x_rows: Vec<f64>,
}

impl<'a> Posterior<'a> {
    pub fn new(spec: &'a ModelSpec, dm: &'a DesignMatrix) -> Result<Self> {
        spec.check_design(dm)?;
        let log_binom = match spec.family {
            Family::BernoulliLogit => {
                check_single_trials(dm)?;
                Vec::new()
            }
            Family::BetaBinomialLogit => {
                if dm.n_rows() > 0 && dm.all_single_trials() {
                    log::warn!(
                        "beta-binomial fit on single-trial rows: the likelihood does not depend on phi, \
                         so its posterior equals its prior"
                    );
                }
                log_binomials(dm)?
            }
        };
        Ok(Posterior {
            spec,
            dm,
            log_binom,
            x_rows: dm.x.iter().copied().collect(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn design(&self) -> &DesignMatrix {
        self.dm
    }

    fn eval(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let p = self.spec.n_coefficients;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let prior = prior_value_and_grad(self.spec, theta, grad.as_deref_mut());
        let n = self.dm.n_rows();
        if n == 0 {
            return prior;
        }
        let beta = &theta[..p];
        let want_grad = grad.is_some();
        let mut terms = Vec::with_capacity(n);
        let mut g_lik = vec![0.0; if want_grad { p } else { 0 }];
        let mut d_log_phi = 0.0;
        for (i, row) in self.x_rows.chunks_exact(p).enumerate() {
            let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
            let d_eta = match self.spec.family {
                Family::BernoulliLogit if want_grad => {
                    let (value, d) = bernoulli_row_and_grad(self.dm.y[i], eta);
                    terms.push(value);
                    d
                }
                Family::BernoulliLogit => {
                    terms.push(bernoulli_row(self.dm.y[i], eta));
                    continue;
                }
                Family::BetaBinomialLogit => {
                    let r = bb_row(self.dm.y[i], self.dm.trials[i], eta, theta[p]);
                    terms.push(self.log_binom[i] + r.value);
                    d_log_phi += r.d_log_phi;
                    r.d_eta
                }
            };
            if want_grad {
                for (g, x) in g_lik.iter_mut().zip(row) {
                    *g += d_eta * x;
                }
            }
        }
        if let Some(g) = grad {
            for (gj, lj) in g.iter_mut().zip(&g_lik) {
                *gj += lj;
            }
            if self.spec.family.has_phi() {
                g[p] += d_log_phi;
            }
        }
        prior + pairwise_sum(&terms)
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.eval(theta, None)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(theta, Some(grad))
    }
}

/// log_prior + family log-likelihood.
pub fn log_posterior(spec: &ModelSpec, dm: &DesignMatrix, theta: &[f64]) -> Result<f64> {
    spec.check_theta(theta)?;
    Ok(Posterior::new(spec, dm)?.log_density(theta))
}

/// Analytic gradient of [`log_posterior`] in the unconstrained layout.
pub fn grad_log_posterior(spec: &ModelSpec, dm: &DesignMatrix, theta: &[f64]) -> Result<Vec<f64>> {
    spec.check_theta(theta)?;
    let post = Posterior::new(spec, dm)?;
    let mut grad = vec![0.0; spec.dim()];
    post.log_density_and_grad(theta, &mut grad);
    Ok(grad)
}

/// Draws from the posterior of `spec` given `dm` with NUTS.
///
/// A beta-binomial likelihood on single-trial rows does not depend on φ, so
/// the posterior factorizes into the coefficient posterior times the φ
/// prior. NUTS then runs on the coefficients alone and log φ is drawn
/// exactly from its prior on stream `chains + c` of the sampler seed.
pub fn sample_posterior(
    spec: &ModelSpec,
    dm: &DesignMatrix,
    config: &SamplerConfig,
) -> Result<SampleSet> {
    let names = spec.param_names(&dm.column_names);
    if spec.family != Family::BetaBinomialLogit || dm.n_rows() == 0 || !dm.all_single_trials() {
        return sample(&Posterior::new(spec, dm)?, names, config);
    }
    let p = spec.n_coefficients;
    let coefficients = ModelSpec::new(Family::BernoulliLogit, spec.priors, p)?;
    let mut set = sample(
        &Posterior::new(&coefficients, dm)?,
        names[..p].to_vec(),
        config,
    )?;
    let (chains, iters, _) = set.draws.dim();
    let mut draws = Array3::zeros((chains, iters, p + 1));
    draws.slice_mut(s![.., .., ..p]).assign(&set.draws);
    for c in 0..chains {
        let mut rng = chain_rng(config.seed, chains + c);
        for i in 0..iters {
            draws[[c, i, p]] =
                sample_log_gamma(spec.priors.phi_shape, spec.priors.phi_rate, &mut rng)?;
        }
    }
    set.draws = draws;
    set.param_names = names;
    Ok(set)
}

/// ln X for X ~ Gamma(shape, rate), finite even when X underflows: with
/// Y ~ Gamma(shape + 1, 1) and U ~ Uniform(0, 1), Y·U^(1/shape) ~ Gamma(shape, 1).
fn sample_log_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let y = Gamma::new(shape + 1.0, 1.0).map_err(|_| Error::Domain {
        function: "phi prior",
        value: shape,
        domain: "shape > 0",
    })?;
    let u: f64 = rng.random();
    Ok(y.sample(rng).ln() + (1.0 - u).ln() / shape - rate.ln())
}

/// N × S matrix of per-observation log-likelihoods, one column per retained
/// draw (chains concatenated in chain order).
pub fn pointwise_log_lik(
    spec: &ModelSpec,
    dm: &DesignMatrix,
    samples: &SampleSet,
) -> Result<Array2<f64>> {
    spec.check_design(dm)?;
    if samples.dim() != spec.dim() {
        return Err(Error::Shape(format!(
            "draws have dimension {}, model expects {}",
            samples.dim(),
            spec.dim()
        )));
    }
    let draws = samples.flat_draws();
    pointwise_log_lik_draws(spec, dm, &draws)
}

/// As [`pointwise_log_lik`] over an S × dim matrix of draws.
pub fn pointwise_log_lik_draws(
    spec: &ModelSpec,
    dm: &DesignMatrix,
    draws: &Array2<f64>,
) -> Result<Array2<f64>> {
    spec.check_design(dm)?;
    if draws.ncols() != spec.dim() {
        return Err(Error::Shape(format!(
            "draws have dimension {}, model expects {}",
            draws.ncols(),
            spec.dim()
        )));
    }
    let p = spec.n_coefficients;
    let coefs = draws.slice(ndarray::s![.., ..p]);
    let eta = dm.x.dot(&coefs.t());
    let mut out = Array2::zeros(eta.dim());
    match spec.family {
        Family::BernoulliLogit => {
            check_single_trials(dm)?;
            ndarray::Zip::indexed(&mut out)
                .and(&eta)
                .for_each(|(i, _), o, &e| {
                    *o = bernoulli_row(dm.y[i], e);
                });
        }
        Family::BetaBinomialLogit => {
            let log_binom = log_binomials(dm)?;
            let log_phi = draws.column(p);
            ndarray::Zip::indexed(&mut out)
                .and(&eta)
                .for_each(|(i, s), o, &e| {
                    *o = log_binom[i] + bb_row(dm.y[i], dm.trials[i], e, log_phi[s]).value;
                });
        }
    }
    Ok(out)
}

/// Collapses a per-booking (single-trial) pointwise matrix onto groups of
/// identical covariate rows, producing the log-probability of each group's
/// success count: row log-likelihoods are summed and ln C(n, y) is added.
/// `groups[i]` is the group of input row `i`; `grouped` holds the merged
/// counts (see [`crate::ingest::aggregate_trials_with_groups`]).
pub fn group_pointwise(
    loglik: &Array2<f64>,
    groups: &[usize],
    grouped: &DesignMatrix,
) -> Result<Array2<f64>> {
    if groups.len() != loglik.nrows() {
        return Err(Error::Shape(format!(
            "{} group labels for {} rows",
            groups.len(),
            loglik.nrows()
        )));
    }
    let n_groups = grouped.n_rows();
    let mut out = Array2::zeros((n_groups, loglik.ncols()));
    for (i, &g) in groups.iter().enumerate() {
        if g >= n_groups {
            return Err(Error::Shape(format!("group index {g} out of range")));
        }
        let mut row = out.row_mut(g);
        row += &loglik.row(i);
    }
    let log_binom = log_binomials(grouped)?;
    for (g, lb) in log_binom.into_iter().enumerate() {
        out.row_mut(g).mapv_inplace(|v| v + lb);
    }
    Ok(out)
}
