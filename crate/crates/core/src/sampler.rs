//! No-U-turn Hamiltonian Monte Carlo with warmup adaptation.
//!
//! Each transition grows a trajectory by repeated doubling in a random time
//! direction until the generalized no-U-turn criterion fires (checked on the
//! whole trajectory and across the two halves of every subtree), a leapfrog
//! step diverges, or the depth limit is hit. The next state is drawn by
//! multinomial weighting: uniformly-progressive inside subtrees and biased
//! toward the newest subtree at the top level.
//!
//! Warmup runs dual-averaging step-size adaptation throughout and estimates
//! a diagonal inverse mass matrix over doubling windows (75 iterations of
//! step size only, windows of 25, 50, 100, … and a final 50-iteration
//! step-size-only buffer). Adaptation is frozen afterwards.
//!
//! `max_tree_depth` counts doublings from zero: depth 0 is a single leapfrog
//! step, and a trajectory holds at most `2^(max_tree_depth + 1) − 1` steps.

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkernels::log_add_exp;

/// Energy error beyond which a leapfrog step counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;
/// Fraction of divergent post-warmup transitions that fails a run.
pub const MAX_DIVERGENT_FRACTION: f64 = 0.25;
pub const MIN_ADAPT_WARMUP: usize = 150;
const INIT_ATTEMPTS: usize = 100;
const INIT_BUFFER: usize = 75;
const TERM_BUFFER: usize = 50;
const BASE_WINDOW: usize = 25;
const MIN_INV_MASS: f64 = 1e-10;

/// A differentiable unnormalized log-density on ℝ^dim.
///
/// Implementations return a non-finite value (or fill a non-finite gradient)
/// outside the support; the sampler treats that as a divergence.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        self.log_density_and_grad(theta, &mut grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    pub init_radius: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup_iters: 1000,
            sampling_iters: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 1,
            init_radius: 2.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("sampler.chains must be at least 1".into()));
        }
        if self.sampling_iters == 0 {
            return Err(Error::Config("sampler.samples must be at least 1".into()));
        }
        if self.warmup_iters != 0 && self.warmup_iters < MIN_ADAPT_WARMUP {
            return Err(Error::Config(format!(
                "sampler.warmup must be 0 (no adaptation) or at least {MIN_ADAPT_WARMUP}, got {}",
                self.warmup_iters
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "sampler.target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if !(1..=15).contains(&self.max_tree_depth) {
            return Err(Error::Config(format!(
                "sampler.max_tree_depth must lie in [1, 15], got {}",
                self.max_tree_depth
            )));
        }
        if !(self.init_radius > 0.0) || !self.init_radius.is_finite() {
            return Err(Error::Config("sampler.init_radius must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-transition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
    /// Energy of the selected state minus the energy at the trajectory start.
    pub energy_error: f64,
    pub step_size: f64,
}

/// A point in phase space with cached log-density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>, p: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let log_density = target.log_density_and_grad(&q, &mut grad);
        PhasePoint {
            q,
            p,
            grad,
            log_density,
        }
    }

    pub fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self
            .p
            .iter()
            .zip(inv_mass)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// H = −log π(q) + ½ pᵀM⁻¹p; +∞ for invalid points.
    pub fn energy(&self, inv_mass: &[f64]) -> f64 {
        let h = -self.log_density + self.kinetic(inv_mass);
        if h.is_nan() || !self.grad.iter().all(|g| g.is_finite()) {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }
}

/// One leapfrog step of signed size `step_size`: half kick, drift, half kick.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    point: &PhasePoint,
    step_size: f64,
    inv_mass: &[f64],
) -> PhasePoint {
    let half = 0.5 * step_size;
    let p_half: Vec<f64> = point
        .p
        .iter()
        .zip(&point.grad)
        .map(|(p, g)| p + half * g)
        .collect();
    let q: Vec<f64> = point
        .q
        .iter()
        .zip(&p_half)
        .zip(inv_mass)
        .map(|((q, p), m)| q + step_size * m * p)
        .collect();
    let mut next = PhasePoint::new(target, q, p_half);
    for (p, g) in next.p.iter_mut().zip(&next.grad) {
        *p += half * g;
    }
    next
}

/// Dual-averaging step-size controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualAverage {
    pub target: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    pub mu: f64,
    pub s_bar: f64,
    pub x_bar: f64,
    pub counter: f64,
}

impl DualAverage {
    pub fn new(target: f64, initial_step: f64) -> Self {
        DualAverage {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: (10.0 * initial_step).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        }
    }

    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.counter = 0.0;
    }

    /// Returns the next step size.
    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let weight = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - weight) * self.x_bar + weight * x;
        x.exp()
    }

    /// The averaged step size used after warmup.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationState {
    pub step_size: f64,
    pub inv_mass_diag: Vec<f64>,
    pub dual_avg: DualAverage,
}

impl AdaptationState {
    pub fn new(dim: usize, target_accept: f64) -> Self {
        AdaptationState {
            step_size: 1.0,
            inv_mass_diag: vec![1.0; dim],
            dual_avg: DualAverage::new(target_accept, 1.0),
        }
    }
}

/// The outcome of one trajectory.
#[derive(Debug, Clone)]
pub struct Transition {
    pub point: PhasePoint,
    pub stats: DrawStats,
}

struct Subtree {
    left: PhasePoint,
    right: PhasePoint,
    proposal: PhasePoint,
    rho: Vec<f64>,
    log_weight: f64,
}

struct TreeBuilder<'a, T: ?Sized, R> {
    target: &'a T,
    step_size: f64,
    inv_mass: &'a [f64],
    h0: f64,
    rng: &'a mut R,
    n_leapfrog: usize,
    sum_accept: f64,
    divergent: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl<T: LogDensity + ?Sized, R: Rng> TreeBuilder<'_, T, R> {
    fn no_u_turn(&self, left: &PhasePoint, right: &PhasePoint, rho: &[f64]) -> bool {
        dot(&left.velocity(self.inv_mass), rho) > 0.0
            && dot(&right.velocity(self.inv_mass), rho) > 0.0
    }

    /// Joins two adjacent subtrees (`left` earlier in time than `right`) and
    /// reports whether the join is free of U-turns.
    fn join_criterion(&self, left: &Subtree, right: &Subtree, rho: &[f64]) -> bool {
        self.no_u_turn(&left.left, &right.right, rho)
            && self.no_u_turn(&left.left, &right.left, &add(&left.rho, &right.left.p))
            && self.no_u_turn(&left.right, &right.right, &add(&right.rho, &left.right.p))
    }

    /// Builds a subtree of 2^depth leapfrog steps starting next to `from`.
    /// `None` means the subtree diverged or turned back on itself.
    fn build(&mut self, from: &PhasePoint, depth: usize, forward: bool) -> Option<Subtree> {
        if depth == 0 {
            let eps = if forward {
                self.step_size
            } else {
                -self.step_size
            };
            let next = leapfrog(self.target, from, eps, self.inv_mass);
            self.n_leapfrog += 1;
            let h = next.energy(self.inv_mass);
            let delta = self.h0 - h;
            self.sum_accept += if delta > 0.0 { 1.0 } else { delta.exp() };
            if !h.is_finite() || h - self.h0 > DIVERGENCE_THRESHOLD {
                self.divergent = true;
                return None;
            }
            return Some(Subtree {
                left: next.clone(),
                right: next.clone(),
                rho: next.p.clone(),
                proposal: next,
                log_weight: delta,
            });
        }
        let first = self.build(from, depth - 1, forward)?;
        let edge = if forward { &first.right } else { &first.left };
        let edge = edge.clone();
        let second = self.build(&edge, depth - 1, forward)?;
        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let take_second = self.rng.random::<f64>() < (second.log_weight - log_weight).exp();
        let (left, right) = if forward {
            (first, second)
        } else {
            (second, first)
        };
        let rho = add(&left.rho, &right.rho);
        if !self.join_criterion(&left, &right, &rho) {
            return None;
        }
        let proposal = match (take_second, forward) {
            (true, true) | (false, false) => right.proposal,
            _ => left.proposal,
        };
        Some(Subtree {
            left: left.left,
            right: right.right,
            proposal,
            rho,
            log_weight,
        })
    }
}

/// Draws a momentum and runs one no-U-turn trajectory from `point`.
pub fn build_trajectory<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    point: &PhasePoint,
    adapt: &AdaptationState,
    max_tree_depth: usize,
    rng: &mut R,
) -> Transition {
    let inv_mass = &adapt.inv_mass_diag;
    let mut start = point.clone();
    start.p = inv_mass
        .iter()
        .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
        .collect();
    let h0 = start.energy(inv_mass);
    let mut builder = TreeBuilder {
        target,
        step_size: adapt.step_size,
        inv_mass,
        h0,
        rng,
        n_leapfrog: 0,
        sum_accept: 0.0,
        divergent: false,
    };
    let mut tree = Subtree {
        left: start.clone(),
        right: start.clone(),
        rho: start.p.clone(),
        proposal: start,
        log_weight: 0.0,
    };
    let mut depth = 0;
    loop {
        let forward = builder.rng.random::<bool>();
        let edge = if forward {
            tree.right.clone()
        } else {
            tree.left.clone()
        };
        let Some(new) = builder.build(&edge, depth, forward) else {
            break;
        };
        let accept_new = new.log_weight > tree.log_weight
            || builder.rng.random::<f64>() < (new.log_weight - tree.log_weight).exp();
        let log_weight = log_add_exp(tree.log_weight, new.log_weight);
        let old_proposal = if accept_new {
            new.proposal.clone()
        } else {
            tree.proposal.clone()
        };
        let (left, right) = if forward { (tree, new) } else { (new, tree) };
        let rho = add(&left.rho, &right.rho);
        let keep_going = builder.join_criterion(&left, &right, &rho);
        tree = Subtree {
            left: left.left,
            right: right.right,
            proposal: old_proposal,
            rho,
            log_weight,
        };
        if !keep_going || depth >= max_tree_depth {
            break;
        }
        depth += 1;
    }
    let accept_stat = if builder.n_leapfrog > 0 {
        builder.sum_accept / builder.n_leapfrog as f64
    } else {
        0.0
    };
    let energy = tree.proposal.energy(inv_mass);
    Transition {
        stats: DrawStats {
            accept_stat,
            tree_depth: depth,
            n_leapfrog: builder.n_leapfrog,
            divergent: builder.divergent,
            energy,
            energy_error: energy - h0,
            step_size: adapt.step_size,
        },
        point: tree.proposal,
    }
}

/// Doubling/halving search for a step size whose single-step acceptance
/// crosses 0.8.
fn initial_step_size<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    point: &PhasePoint,
    inv_mass: &[f64],
    mut step: f64,
    rng: &mut R,
) -> f64 {
    let log_threshold = 0.8f64.ln();
    let probe = |step: f64, rng: &mut R| {
        let mut start = point.clone();
        start.p = inv_mass
            .iter()
            .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
            .collect();
        let h0 = start.energy(inv_mass);
        let next = leapfrog(target, &start, step, inv_mass);
        let h = next.energy(inv_mass);
        h0 - if h.is_nan() { f64::INFINITY } else { h }
    };
    let increase = probe(step, rng) > log_threshold;
    for _ in 0..100 {
        let delta = probe(step, rng);
        if increase && !(delta > log_threshold) || !increase && !(delta < log_threshold) {
            break;
        }
        step = if increase { 2.0 * step } else { 0.5 * step };
        if !(step > 1e-12 && step < 1e7) {
            step = step.clamp(1e-12, 1e7);
            break;
        }
    }
    step
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
struct VarianceEstimator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    fn new(dim: usize) -> Self {
        VarianceEstimator {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n as f64;
            *s += d * (v - *m);
        }
    }

    fn variance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }
}

/// Schedule of the slow (mass-matrix) adaptation windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSchedule {
    /// Inclusive iteration indices at which a window closes.
    pub window_ends: Vec<usize>,
    pub first_window_start: usize,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let last = warmup - TERM_BUFFER - 1;
        let mut end = (INIT_BUFFER + BASE_WINDOW - 1).min(last);
        let mut size = BASE_WINDOW;
        let mut ends = vec![end];
        while end != last {
            size *= 2;
            end += size;
            if end + 2 * size > last || end > last {
                end = last;
            }
            ends.push(end);
        }
        WindowSchedule {
            window_ends: ends,
            first_window_start: INIT_BUFFER,
        }
    }
}

/// The result of warmup for one chain.
#[derive(Debug, Clone)]
pub struct Warmup {
    pub adaptation: AdaptationState,
    /// The state the chain has reached when warmup ends.
    pub point: PhasePoint,
    pub stats: Vec<DrawStats>,
}

/// Runs warmup for one chain.
pub fn adapt_warmup<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    start: PhasePoint,
    config: &SamplerConfig,
    rng: &mut R,
) -> Warmup {
    let dim = target.dim();
    let mut adapt = AdaptationState::new(dim, config.target_accept);
    let mut point = start;
    let mut stats = Vec::with_capacity(config.warmup_iters);
    if config.warmup_iters == 0 {
        return Warmup {
            adaptation: adapt,
            point,
            stats,
        };
    }
    adapt.step_size = initial_step_size(target, &point, &adapt.inv_mass_diag, 1.0, rng);
    adapt.dual_avg.restart(adapt.step_size);
    let schedule = WindowSchedule::new(config.warmup_iters);
    let mut window = 0;
    let mut estimator = VarianceEstimator::new(dim);
    let slow_end = *schedule.window_ends.last().unwrap();
    for iter in 0..config.warmup_iters {
        let tr = build_trajectory(target, &point, &adapt, config.max_tree_depth, rng);
        point = tr.point;
        stats.push(tr.stats);
        adapt.step_size = adapt.dual_avg.learn(tr.stats.accept_stat);
        if iter >= schedule.first_window_start && iter <= slow_end {
            estimator.add(&point.q);
            if iter == schedule.window_ends[window] {
                let mut var = estimator.variance();
                for (j, v) in var.iter_mut().enumerate() {
                    if !(*v >= MIN_INV_MASS) {
                        log::warn!(
                            "coordinate {j}: warmup variance {v:e} is degenerate; inverse mass floored at {MIN_INV_MASS:e}"
                        );
                        *v = MIN_INV_MASS;
                    }
                }
                adapt.inv_mass_diag = var;
                estimator = VarianceEstimator::new(dim);
                window += 1;
                adapt.step_size =
                    initial_step_size(target, &point, &adapt.inv_mass_diag, adapt.step_size, rng);
                adapt.dual_avg.restart(adapt.step_size);
            }
        }
    }
    adapt.step_size = adapt.dual_avg.final_step();
    Warmup {
        adaptation: adapt,
        point,
        stats,
    }
}

/// Posterior draws of every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// chains × sampling_iters × dim, unconstrained scale.
    pub draws: Array3<f64>,
    pub param_names: Vec<String>,
    /// stats[chain][iteration]
    pub stats: Vec<Vec<DrawStats>>,
    /// warmup_stats[chain][iteration]
    pub warmup_stats: Vec<Vec<DrawStats>>,
    pub config: SamplerConfig,
    pub adaptation: Vec<AdaptationState>,
}

impl SampleSet {
    pub fn n_chains(&self) -> usize {
        self.draws.len_of(Axis(0))
    }

    pub fn n_iters(&self) -> usize {
        self.draws.len_of(Axis(1))
    }

    pub fn dim(&self) -> usize {
        self.draws.len_of(Axis(2))
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_iters()
    }

    /// chains × iterations draws of parameter `j`.
    pub fn param_draws(&self, j: usize) -> Array2<f64> {
        self.draws.index_axis(Axis(2), j).to_owned()
    }

    /// (chains·iterations) × dim, chain-major.
    pub fn flat_draws(&self) -> Array2<f64> {
        let shape = (self.total_draws(), self.dim());
        self.draws
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(shape)
            .expect("contiguous draws")
    }

    pub fn divergent_count(&self) -> usize {
        self.stats.iter().flatten().filter(|s| s.divergent).count()
    }
}

/// Finds a starting point with finite log-density and gradient.
fn initialize<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    radius: f64,
    rng: &mut R,
) -> Result<PhasePoint> {
    let dim = target.dim();
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-radius..radius))
            .collect();
        let point = PhasePoint::new(target, q, vec![0.0; dim]);
        if point.log_density.is_finite() && point.grad.iter().all(|g| g.is_finite()) {
            return Ok(point);
        }
    }
    Err(Error::Initialization {
        attempts: INIT_ATTEMPTS,
    })
}

/// The RNG stream of chain `chain` under `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Post-warmup draws and stats of one chain, plus its warmup.
pub type ChainOutput = (Vec<Vec<f64>>, Vec<DrawStats>, Warmup);

/// Runs a single chain; its output depends only on (target, config, chain).
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.seed, chain);
    let start = initialize(target, config.init_radius, &mut rng)?;
    let warmup = adapt_warmup(target, start, config, &mut rng);
    let adapt = &warmup.adaptation;
    let mut point = warmup.point.clone();
    let mut draws = Vec::with_capacity(config.sampling_iters);
    let mut stats = Vec::with_capacity(config.sampling_iters);
    for _ in 0..config.sampling_iters {
        let tr = build_trajectory(target, &point, adapt, config.max_tree_depth, &mut rng);
        point = tr.point;
        draws.push(point.q.clone());
        stats.push(tr.stats);
    }
    Ok((draws, stats, warmup))
}

/// Draws from `target` with `config.chains` independent chains run in
/// parallel on the current rayon pool.
pub fn sample<T: LogDensity + ?Sized>(
    target: &T,
    param_names: Vec<String>,
    config: &SamplerConfig,
) -> Result<SampleSet> {
    config.validate()?;
    let dim = target.dim();
    if param_names.len() != dim {
        return Err(Error::Shape(format!(
            "{} parameter names for dimension {dim}",
            param_names.len()
        )));
    }
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|chain| run_chain(target, config, chain))
        .collect::<Result<_>>()?;

    let mut draws = Array3::zeros((config.chains, config.sampling_iters, dim));
    let mut stats = Vec::with_capacity(config.chains);
    let mut adaptation = Vec::with_capacity(config.chains);
    let mut warmup_stats = Vec::with_capacity(config.chains);
    for (c, (chain_draws, chain_stats, warmup)) in outputs.into_iter().enumerate() {
        for (i, q) in chain_draws.iter().enumerate() {
            for (j, &v) in q.iter().enumerate() {
                draws[[c, i, j]] = v;
            }
        }
        stats.push(chain_stats);
        adaptation.push(warmup.adaptation);
        warmup_stats.push(warmup.stats);
    }
    let set = SampleSet {
        draws,
        param_names,
        stats,
        warmup_stats,
        config: config.clone(),
        adaptation,
    };
    let divergent = set.divergent_count();
    if divergent > 0 {
        log::warn!("{divergent} divergent transitions after warmup");
    }
    if divergent as f64 > MAX_DIVERGENT_FRACTION * set.total_draws() as f64 {
        let chains = set
            .stats
            .iter()
            .enumerate()
            .filter(|(_, s)| s.iter().any(|d| d.divergent))
            .map(|(c, _)| c)
            .collect();
        return Err(Error::Divergence {
            divergent,
            total: set.total_draws(),
            chains,
        });
    }
    Ok(set)
}
