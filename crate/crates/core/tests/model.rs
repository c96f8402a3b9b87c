use bayes_cancel::ingest::{DesignMatrix, INTERCEPT};
use bayes_cancel::model::{
    grad_log_posterior, log_lik_bernoulli, log_lik_beta_binomial, log_posterior, log_prior,
    pointwise_log_lik_draws, sample_posterior, Family, ModelSpec, Posterior, PriorSpec,
};
use bayes_cancel::sampler::{sample, SamplerConfig};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{digamma, ln_gamma};

mod oracle {
    use super::*;

    pub fn sigmoid(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    pub fn normal_lpdf(x: f64, m: f64, s: f64) -> f64 {
        -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn gamma_lpdf(x: f64, shape: f64, rate: f64) -> f64 {
        shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
    }

    /// Beta-binomial log-PMF straight from Γ functions.
    pub fn bb_lpmf(y: u32, n: u32, mu: f64, phi: f64) -> f64 {
        let (a, b) = (mu * phi, (1.0 - mu) * phi);
        let (y, n) = (y as f64, n as f64);
        ln_gamma(n + 1.0) - ln_gamma(y + 1.0) - ln_gamma(n - y + 1.0)
            + ln_gamma(y + a)
            + ln_gamma(n - y + b)
            - ln_gamma(n + a + b)
            - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
    }

    pub fn log_posterior(spec: &ModelSpec, dm: &DesignMatrix, theta: &[f64]) -> f64 {
        let pr = &spec.priors;
        let p = spec.n_coefficients;
        let mut total = normal_lpdf(theta[0], pr.intercept_mean, pr.intercept_sd);
        for &b in &theta[1..p] {
            total += normal_lpdf(b, pr.slope_mean, pr.slope_sd);
        }
        if spec.family == Family::BetaBinomialLogit {
            total += gamma_lpdf(theta[p].exp(), pr.phi_shape, pr.phi_rate) + theta[p];
        }
        for i in 0..dm.n_rows() {
            let eta: f64 = (0..p).map(|j| dm.x[[i, j]] * theta[j]).sum();
            let mu = sigmoid(eta);
            total += match spec.family {
                Family::BernoulliLogit => {
                    if dm.y[i] == 1 {
                        mu.ln()
                    } else {
                        (1.0 - mu).ln()
                    }
                }
                Family::BetaBinomialLogit => bb_lpmf(dm.y[i], dm.trials[i], mu, theta[p].exp()),
            };
        }
        total
    }
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize, max_trials: u32) -> DesignMatrix {
    let x = Array2::from_shape_fn((n, p), |(_, j)| {
        if j == 0 {
            1.0
        } else {
            rng.sample(StandardNormal)
        }
    });
    let trials: Vec<u32> = (0..n).map(|_| rng.random_range(1..=max_trials)).collect();
    let y = trials.iter().map(|&t| rng.random_range(0..=t)).collect();
    let mut names = vec![INTERCEPT.to_string()];
    names.extend((1..p).map(|j| format!("x{j}")));
    DesignMatrix::new(x, names, y, trials, (0..n).map(|i| i.to_string()).collect()).unwrap()
}

fn random_theta(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
}

fn single_row(y: u32, n: u32) -> DesignMatrix {
    DesignMatrix::new(
        Array2::ones((1, 1)),
        vec![INTERCEPT.into()],
        vec![y],
        vec![n],
        vec!["r".into()],
    )
    .unwrap()
}

#[test]
fn posterior_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..10 {
        let (family, max_trials) = if trial % 2 == 0 {
            (Family::BernoulliLogit, 1)
        } else {
            (Family::BetaBinomialLogit, 8)
        };
        let dm = random_design(&mut rng, 40, 3, max_trials);
        let priors = PriorSpec {
            intercept_mean: rng.random_range(-2.0..2.0),
            intercept_sd: rng.random_range(0.5..3.0),
            slope_mean: rng.random_range(-1.0..1.0),
            slope_sd: rng.random_range(0.3..2.0),
            phi_shape: rng.random_range(0.5..3.0),
            phi_rate: rng.random_range(0.1..2.0),
        };
        let spec = ModelSpec::new(family, priors, 3).unwrap();
        let theta = random_theta(&mut rng, spec.dim());
        let got = log_posterior(&spec, &dm, &theta).unwrap();
        let want = oracle::log_posterior(&spec, &dm, &theta);
        assert!(
            (got - want).abs() < 1e-9 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    for (family, max_trials) in [(Family::BernoulliLogit, 1), (Family::BetaBinomialLogit, 12)] {
        let dm = random_design(&mut rng, 60, 4, max_trials);
        let spec = ModelSpec::with_default_priors(family, 4).unwrap();
        for _ in 0..100 {
            let theta = random_theta(&mut rng, spec.dim());
            let grad = grad_log_posterior(&spec, &dm, &theta).unwrap();
            for j in 0..spec.dim() {
                let (mut up, mut down) = (theta.clone(), theta.clone());
                up[j] += h;
                down[j] -= h;
                let fd = (log_posterior(&spec, &dm, &up).unwrap()
                    - log_posterior(&spec, &dm, &down).unwrap())
                    / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(1.0);
                assert!(rel < 1e-5, "{family:?} coordinate {j}: {} vs {fd}", grad[j]);
            }
        }
    }
}

#[test]
fn beta_binomial_pmf_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let mu: f64 = rng.random_range(0.01..0.99);
        let log_phi: f64 = rng.random_range(-3.0..6.0);
        let theta = [(mu / (1.0 - mu)).ln(), log_phi];
        let n = 12;
        let total: f64 = (0..=n)
            .map(|y| {
                log_lik_beta_binomial(&single_row(y, n), &theta)
                    .unwrap()
                    .exp()
            })
            .sum();
        assert!(
            (total - 1.0).abs() < 1e-10,
            "mu {mu} log_phi {log_phi}: {total}"
        );
    }
}

#[test]
fn beta_binomial_matches_gamma_function_oracle() {
    let got = log_lik_beta_binomial(&single_row(3, 10), &[(0.3f64 / 0.7).ln(), 5f64.ln()]).unwrap();
    assert!((got - oracle::bb_lpmf(3, 10, 0.3, 5.0)).abs() < 1e-10);
}

#[test]
fn bernoulli_matches_product_of_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dm = random_design(&mut rng, 20, 3, 1);
    let theta = random_theta(&mut rng, 3);
    let product: f64 = (0..20)
        .map(|i| {
            let mu = oracle::sigmoid((0..3).map(|j| dm.x[[i, j]] * theta[j]).sum());
            if dm.y[i] == 1 {
                mu
            } else {
                1.0 - mu
            }
        })
        .product();
    assert!((log_lik_bernoulli(&dm, &theta).unwrap() - product.ln()).abs() < 1e-10);
}

#[test]
fn bernoulli_at_table_intercept() {
    let got = log_lik_bernoulli(&single_row(1, 1), &[4.16]).unwrap();
    assert!((got - 0.984_632_294_434_724_4f64.ln()).abs() < 1e-14);
}

#[test]
fn pointwise_columns_sum_to_the_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (family, max_trials) in [(Family::BernoulliLogit, 1), (Family::BetaBinomialLogit, 6)] {
        let dm = random_design(&mut rng, 50, 3, max_trials);
        let spec = ModelSpec::with_default_priors(family, 3).unwrap();
        let draws = Array2::from_shape_fn((7, spec.dim()), |_| rng.random_range(-1.0..1.0));
        let pw = pointwise_log_lik_draws(&spec, &dm, &draws).unwrap();
        for s in 0..7 {
            let theta = draws.row(s).to_vec();
            let lik = match family {
                Family::BernoulliLogit => log_lik_bernoulli(&dm, &theta).unwrap(),
                Family::BetaBinomialLogit => log_lik_beta_binomial(&dm, &theta).unwrap(),
            };
            assert!((pw.column(s).sum() - lik).abs() < 1e-9);
        }
    }
}

#[test]
fn single_draw_at_zero_is_log_half_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dm = random_design(&mut rng, 9, 2, 1);
    let spec = ModelSpec::with_default_priors(Family::BernoulliLogit, 2).unwrap();
    let pw = pointwise_log_lik_draws(&spec, &dm, &Array2::zeros((1, 2))).unwrap();
    assert!(pw.iter().all(|&v| v == 0.5f64.ln()));
}

#[test]
fn halving_slope_sd_lowers_the_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dm = random_design(&mut rng, 30, 3, 1);
    let wide = ModelSpec::with_default_priors(Family::BernoulliLogit, 3).unwrap();
    let mut narrow = wide.clone();
    narrow.priors.slope_sd /= 2.0;
    let theta = [0.5, 1.0, -0.8];
    assert!(
        log_posterior(&narrow, &dm, &theta).unwrap() < log_posterior(&wide, &dm, &theta).unwrap()
    );
}

#[test]
fn concatenated_data_gradient_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_design(&mut rng, 25, 3, 5);
    let b = random_design(&mut rng, 15, 3, 5);
    let both = DesignMatrix::new(
        ndarray::concatenate![ndarray::Axis(0), a.x, b.x],
        a.column_names.clone(),
        [a.y.clone(), b.y.clone()].concat(),
        [a.trials.clone(), b.trials.clone()].concat(),
        (0..40).map(|i| i.to_string()).collect(),
    )
    .unwrap();
    let empty = a.select_rows(&[]);
    let spec = ModelSpec::with_default_priors(Family::BetaBinomialLogit, 3).unwrap();
    let theta = random_theta(&mut rng, 4);
    let g = |dm| grad_log_posterior(&spec, dm, &theta).unwrap();
    let (ga, gb, gab, g0) = (g(&a), g(&b), g(&both), g(&empty));
    for j in 0..4 {
        assert!((gab[j] - (ga[j] + gb[j] - g0[j])).abs() < 1e-9 * gab[j].abs().max(1.0));
    }
}

#[test]
fn prior_at_mode_is_sum_of_mode_densities() {
    let spec = ModelSpec::with_default_priors(Family::BernoulliLogit, 4).unwrap();
    let want = oracle::normal_lpdf(0.0, 0.0, 1.0) + 3.0 * oracle::normal_lpdf(0.0, 0.0, 0.5);
    assert!((log_prior(&spec, &[3.5, 0.0, 0.0, 0.0]).unwrap() - want).abs() < 1e-12);
}

fn quick_sampler() -> SamplerConfig {
    SamplerConfig {
        chains: 2,
        warmup_iters: 300,
        sampling_iters: 2000,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn single_trial_beta_binomial_draws_phi_from_its_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dm = random_design(&mut rng, 80, 2, 1);
    let spec = ModelSpec::with_default_priors(Family::BetaBinomialLogit, 2).unwrap();
    let config = quick_sampler();
    let set = sample_posterior(&spec, &dm, &config).unwrap();
    assert_eq!(set.param_names, ["Intercept", "x1", "log_phi"]);

    let coefficients = ModelSpec::new(Family::BernoulliLogit, spec.priors, 2).unwrap();
    let plain = sample(
        &Posterior::new(&coefficients, &dm).unwrap(),
        vec!["a".into(), "b".into()],
        &config,
    )
    .unwrap();
    assert_eq!(set.draws.slice(ndarray::s![.., .., ..2]), plain.draws);

    // ln X for X ~ Gamma(a, b) has mean digamma(a) - ln b and variance trigamma(a).
    let (a, b) = (spec.priors.phi_shape, spec.priors.phi_rate);
    let log_phi: Vec<f64> = set
        .draws
        .slice(ndarray::s![.., .., 2])
        .iter()
        .copied()
        .collect();
    assert!(log_phi.iter().all(|v| v.is_finite()));
    let n = log_phi.len() as f64;
    let mean = log_phi.iter().sum::<f64>() / n;
    let trigamma = 1.0 / (a * a) + std::f64::consts::PI.powi(2) / 6.0;
    let want = digamma(a) - b.ln();
    assert!(
        (mean - want).abs() < 4.0 * (trigamma / n).sqrt(),
        "{mean} vs {want}"
    );
}

#[test]
fn multi_trial_beta_binomial_samples_phi_jointly() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dm = random_design(&mut rng, 60, 2, 6);
    let spec = ModelSpec::with_default_priors(Family::BetaBinomialLogit, 2).unwrap();
    let config = SamplerConfig {
        sampling_iters: 200,
        ..quick_sampler()
    };
    let names = spec.param_names(&dm.column_names);
    let joint = sample(&Posterior::new(&spec, &dm).unwrap(), names, &config).unwrap();
    assert_eq!(
        sample_posterior(&spec, &dm, &config).unwrap().draws,
        joint.draws
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_trials_make_phi_irrelevant(seed in any::<u64>(), log_phi in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = random_design(&mut rng, 30, 3, 1);
        let mut theta = random_theta(&mut rng, 3);
        let bernoulli = log_lik_bernoulli(&dm, &theta).unwrap();
        theta.push(log_phi);
        let bb = log_lik_beta_binomial(&dm, &theta).unwrap();
        prop_assert!((bb - bernoulli).abs() < 1e-9);
    }

    #[test]
    fn bernoulli_likelihood_is_concave_along_segments(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = random_design(&mut rng, 40, 3, 1);
        let a = random_theta(&mut rng, 3);
        let b = random_theta(&mut rng, 3);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let l = |t: &[f64]| log_lik_bernoulli(&dm, t).unwrap();
        prop_assert!(l(&mid) >= 0.5 * (l(&a) + l(&b)) - 1e-12);
    }

    #[test]
    fn row_order_does_not_change_the_posterior(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = random_design(&mut rng, 50, 3, 4);
        let mut order: Vec<usize> = (0..50).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let shuffled = dm.select_rows(&order);
        let spec = ModelSpec::with_default_priors(Family::BetaBinomialLogit, 3).unwrap();
        let theta = random_theta(&mut rng, 4);
        let a = log_posterior(&spec, &dm, &theta).unwrap();
        let b = log_posterior(&spec, &shuffled, &theta).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
    }
}
