use bayes_cancel::loo::{compare, elpd_loo, psis_smooth, K_UNDEFINED};
use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// N × S log-likelihoods of a Bernoulli-logit intercept model whose draws of
/// the intercept are normal around `center`.
fn bernoulli_loglik(y: &[u8], center: f64, spread: f64, s: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(center, spread).unwrap();
    let alpha: Vec<f64> = (0..s).map(|_| dist.sample(&mut rng)).collect();
    Array2::from_shape_fn((y.len(), s), |(i, j)| {
        let p = 1.0 / (1.0 + (-alpha[j]).exp());
        if y[i] == 1 {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    })
}

fn gpd_sample(k: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            ((1.0 - u).powf(-k) - 1.0) / k
        })
        .collect()
}

#[test]
fn recovers_a_known_tail_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total = 0.0;
    for _ in 0..50 {
        let lr: Vec<f64> = gpd_sample(0.3, 4000, &mut rng)
            .into_iter()
            .map(f64::ln)
            .collect();
        total += psis_smooth(&lr).unwrap().k_hat;
    }
    let mean = total / 50.0;
    assert!((mean - 0.3).abs() < 0.15, "mean k_hat {mean}");
}

#[test]
fn heavy_tails_are_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lr: Vec<f64> = gpd_sample(1.2, 4000, &mut rng)
        .into_iter()
        .map(f64::ln)
        .collect();
    assert!(psis_smooth(&lr).unwrap().k_hat > 0.7);
}

#[test]
fn flat_tail_has_undefined_shape() {
    let mut lr = vec![0.0; 100];
    lr[..10].iter_mut().for_each(|v| *v = -3.0);
    let s = psis_smooth(&lr).unwrap();
    assert_eq!(s.k_hat, K_UNDEFINED);
}

#[test]
fn pointwise_values_are_bounded_by_the_best_draw_and_the_lpd() {
    let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 != 0)).collect();
    let ll = bernoulli_loglik(&y, 0.7, 0.4, 1000, 3);
    let r = elpd_loo(&ll).unwrap();
    for (i, e) in r.pointwise_elpd.iter().enumerate() {
        let best = ll.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(*e <= best + 1e-12);
    }
    assert!(r.p_loo >= -1e-9);
    assert!((r.elpd_loo - r.pointwise_elpd.iter().sum::<f64>()).abs() < 1e-12);
    let n = y.len() as f64;
    let mean = r.elpd_loo / n;
    let var = r
        .pointwise_elpd
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    assert!((r.se_elpd - (n * var).sqrt()).abs() < 1e-12);
}

#[test]
fn duplicated_draws_leave_raw_weighting_unchanged() {
    // With a flat tail no smoothing happens, so the estimate is plain
    // importance sampling and invariant to repeating every draw.
    let ll = Array2::from_shape_fn((6, 100), |(i, s)| {
        if s < 80 {
            -0.1 * (i + 1) as f64
        } else {
            -0.5 * (i + 1) as f64
        }
    });
    let doubled = concatenate(Axis(1), &[ll.view(), ll.view()]).unwrap();
    let a = elpd_loo(&ll).unwrap();
    let b = elpd_loo(&doubled).unwrap();
    assert!((a.elpd_loo - b.elpd_loo).abs() < 1e-9);
}

#[test]
fn duplicated_draws_barely_move_smoothed_estimates() {
    let y: Vec<u8> = (0..30).map(|i| u8::from(i % 4 != 0)).collect();
    let ll = bernoulli_loglik(&y, 1.0, 0.4, 2000, 11);
    let doubled = concatenate(Axis(1), &[ll.view(), ll.view()]).unwrap();
    let a = elpd_loo(&ll).unwrap();
    let b = elpd_loo(&doubled).unwrap();
    assert!((a.elpd_loo - b.elpd_loo).abs() < 1e-2);
}

#[test]
fn better_model_ranks_first_with_a_negative_gap() {
    let y: Vec<u8> = (0..50).map(|i| u8::from(i % 5 != 0)).collect();
    let good = elpd_loo(&bernoulli_loglik(&y, 1.4, 0.3, 1000, 1)).unwrap();
    let bad = elpd_loo(&bernoulli_loglik(&y, -1.0, 0.3, 1000, 2)).unwrap();
    let c = compare(&[("bad".into(), bad), ("good".into(), good)]).unwrap();
    assert_eq!(c.rows[0].name, "good");
    assert_eq!((c.rows[0].elpd_diff, c.rows[0].se_diff), (0.0, 0.0));
    assert!(c.rows[1].elpd_diff < 0.0 && c.rows[1].se_diff > 0.0);
    let text = c.to_text();
    assert!(text
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .eq(["Model", "elpd_diff", "se_diff"]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_form_a_probability_vector(lr in proptest::collection::vec(-50.0f64..50.0, 1..500)) {
        let w = psis_smooth(&lr).unwrap().weights();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loo_never_beats_in_sample_fit(seed in 0u64..500, center in -2.0f64..2.0, spread in 0.05f64..2.0) {
        let y: Vec<u8> = (0..20).map(|i| u8::from(!(i * 7 + seed as usize).is_multiple_of(3))).collect();
        let r = elpd_loo(&bernoulli_loglik(&y, center, spread, 200, seed)).unwrap();
        prop_assert!(r.lpd - r.elpd_loo >= -1e-9);
    }
}
