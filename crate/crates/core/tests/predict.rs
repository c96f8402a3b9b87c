use bayes_cancel::ingest::{DesignMatrix, INTERCEPT};
use bayes_cancel::mathkernels::sigmoid;
use bayes_cancel::model::{Family, ModelSpec, Posterior};
use bayes_cancel::predict::{posterior_epred, posterior_predict, prediction_table, PredictMode};
use bayes_cancel::sampler::{chain_rng, sample, SamplerConfig};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn logistic(p: usize) -> ModelSpec {
    ModelSpec::with_default_priors(Family::BernoulliLogit, p).unwrap()
}

fn normal_draws(s: usize, dim: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((s, dim), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_sd_is_the_bernoulli_sd(
        seed in any::<u64>(),
        s in 2usize..600,
        shift in -4.0f64..4.0,
        x1 in -3.0f64..3.0,
    ) {
        let mut draws = normal_draws(s, 2, 1.0, seed);
        draws.column_mut(0).mapv_inplace(|v| v + shift);
        let new_x = Array2::from_shape_vec((1, 2), vec![1.0, x1]).unwrap();
        let row = &prediction_table(&logistic(2), draws.view(), &new_x, PredictMode::Binary, seed).unwrap()[0];
        let n = s as f64;
        let expected = row.estimate * (1.0 - row.estimate) * n / (n - 1.0);
        prop_assert!((row.est_error.powi(2) - expected).abs() < 1e-12);
        prop_assert!(row.q2_5 == 0.0 || row.q2_5 == 1.0);
        prop_assert!(row.q97_5 == 0.0 || row.q97_5 == 1.0);
        prop_assert!(row.q2_5 <= row.q97_5);
    }

    #[test]
    fn probability_estimates_are_strictly_inside(seed in any::<u64>(), scale in 0.1f64..3.0) {
        let draws = normal_draws(200, 3, scale, seed);
        let new_x = Array2::from_shape_vec((2, 3), vec![1.0, 0.5, -1.0, 1.0, -2.0, 3.0]).unwrap();
        for row in prediction_table(&logistic(3), draws.view(), &new_x, PredictMode::Probability, 0).unwrap() {
            prop_assert!(row.estimate > 0.0 && row.estimate < 1.0);
            prop_assert!(0.0 <= row.q2_5 && row.q2_5 <= row.q97_5 && row.q97_5 <= 1.0);
        }
    }

    #[test]
    fn larger_positive_covariate_raises_every_draw(seed in any::<u64>(), x in -3.0f64..3.0, dx in 0.01f64..2.0) {
        let mut draws = normal_draws(100, 2, 1.0, seed);
        draws.column_mut(1).mapv_inplace(|v| v.abs() + 0.1);
        let spec = logistic(2);
        let lo = posterior_epred(&spec, draws.view(), &[1.0, x]).unwrap();
        let hi = posterior_epred(&spec, draws.view(), &[1.0, x + dx]).unwrap();
        prop_assert!(lo.iter().zip(&hi).all(|(a, b)| b >= a));
    }
}

#[test]
fn same_seed_same_table() {
    let draws = normal_draws(400, 2, 1.0, 1);
    let new_x = Array2::from_shape_fn((5, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 - 2.0 });
    let a = prediction_table(&logistic(2), draws.view(), &new_x, PredictMode::Binary, 9).unwrap();
    let b = prediction_table(&logistic(2), draws.view(), &new_x, PredictMode::Binary, 9).unwrap();
    let c = prediction_table(&logistic(2), draws.view(), &new_x, PredictMode::Binary, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn near_certain_draws_always_predict_one() {
    let draws = Array2::from_elem((1000, 1), 40.0);
    let mu = posterior_epred(&logistic(1), draws.view(), &[1.0]).unwrap();
    assert!(mu.iter().all(|&m| m > 1.0 - 1e-16));
    let outcomes =
        posterior_predict(&logistic(1), draws.view(), &[1.0], &mut chain_rng(3, 0)).unwrap();
    assert!(outcomes.iter().all(|&y| y == 1));
}

#[test]
fn outcome_mean_concentrates_on_mean_probability() {
    let s = 20_000;
    let draws = normal_draws(s, 2, 0.8, 2);
    let x = [1.0, 0.7];
    let spec = logistic(2);
    let mu = posterior_epred(&spec, draws.view(), &x).unwrap();
    let p = mu.iter().sum::<f64>() / s as f64;
    let outcomes = posterior_predict(&spec, draws.view(), &x, &mut chain_rng(5, 0)).unwrap();
    let mean = outcomes.iter().map(|&y| f64::from(y)).sum::<f64>() / s as f64;
    assert!((mean - p).abs() < 3.0 * (p * (1.0 - p) / s as f64).sqrt());
}

#[test]
fn identical_draws_have_zero_spread_in_probability_mode() {
    let draws = Array2::from_shape_fn((300, 2), |(_, j)| [0.4, -1.2][j]);
    let new_x = Array2::from_shape_vec((1, 2), vec![1.0, 0.3]).unwrap();
    let row = &prediction_table(
        &logistic(2),
        draws.view(),
        &new_x,
        PredictMode::Probability,
        0,
    )
    .unwrap()[0];
    assert_eq!(row.est_error, 0.0);
    assert_eq!(row.q2_5, row.q97_5);
    assert!((row.estimate - sigmoid(0.4 - 1.2 * 0.3)).abs() < 1e-15);
}

#[test]
fn borderline_row_spans_both_outcomes() {
    let draws = Array2::from_shape_fn((4000, 1), |_| 0.7702);
    let new_x = Array2::from_elem((1, 1), 1.0);
    let row =
        &prediction_table(&logistic(1), draws.view(), &new_x, PredictMode::Binary, 1).unwrap()[0];
    assert!((row.estimate - 0.6835).abs() < 0.03);
    assert_eq!((row.q2_5, row.q97_5), (0.0, 1.0));
}

#[test]
fn empty_new_rows_are_rejected() {
    let draws = normal_draws(10, 2, 1.0, 0);
    let new_x = Array2::zeros((0, 2));
    assert!(prediction_table(&logistic(2), draws.view(), &new_x, PredictMode::Binary, 0).is_err());
}

#[test]
fn probability_intervals_cover_the_generating_probability() {
    let (beta0, beta1) = (0.3, -0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 1000;
    let x1: Array1<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { 1.0 } else { x1[i] });
    let y: Vec<u32> = x1
        .iter()
        .map(|&v| u32::from(rng.random::<f64>() < sigmoid(beta0 + beta1 * v)))
        .collect();
    let names = vec![INTERCEPT.to_string(), "x1".to_string()];
    let dm = DesignMatrix::new(
        x,
        names.clone(),
        y,
        vec![1; n],
        (0..n).map(|i| i.to_string()).collect(),
    )
    .unwrap();
    let spec = ModelSpec::with_default_priors(Family::BernoulliLogit, 2).unwrap();
    let posterior = Posterior::new(&spec, &dm).unwrap();
    let config = SamplerConfig {
        warmup_iters: 500,
        sampling_iters: 500,
        seed: 8,
        ..Default::default()
    };
    let fit = sample(&posterior, spec.param_names(&names), &config).unwrap();
    let draws = fit.flat_draws();

    let test_x = Array2::from_shape_fn(
        (100, 2),
        |(i, j)| if j == 0 { 1.0 } else { -2.5 + 0.05 * i as f64 },
    );
    let rows = prediction_table(&spec, draws.view(), &test_x, PredictMode::Probability, 0).unwrap();
    let covered = rows
        .iter()
        .zip(test_x.rows())
        .filter(|(r, x)| {
            let mu = sigmoid(beta0 + beta1 * x[1]);
            r.q2_5 <= mu && mu <= r.q97_5
        })
        .count();
    assert!(covered >= 90, "covered {covered} of 100");
}
