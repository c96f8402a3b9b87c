use bayes_cancel::diagnostics::ess_bulk;
use bayes_cancel::sampler::{run_chain, sample, LogDensity, SampleSet, SamplerConfig};
use bayes_cancel::Error;

struct Gaussian {
    sds: Vec<f64>,
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.sds.len()
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for ((g, &x), &s) in grad.iter_mut().zip(theta).zip(&self.sds) {
            lp -= 0.5 * x * x / (s * s);
            *g = -x / (s * s);
        }
        lp
    }
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

fn run(sds: &[f64], config: &SamplerConfig) -> SampleSet {
    let target = Gaussian { sds: sds.to_vec() };
    sample(&target, names(sds.len()), config).unwrap()
}

fn column(set: &SampleSet, j: usize) -> Vec<f64> {
    set.param_draws(j).iter().copied().collect()
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn standard_normal_moments() {
    let config = SamplerConfig {
        seed: 11,
        ..Default::default()
    };
    let set = run(&[1.0; 5], &config);
    for j in 0..5 {
        let (m, s) = mean_sd(&column(&set, j));
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((s - 1.0).abs() < 0.05, "sd {s}");
    }
}

#[test]
fn means_lie_within_three_monte_carlo_errors() {
    let sds = [1.0, 2.0, 0.5];
    let config = SamplerConfig {
        seed: 23,
        ..Default::default()
    };
    let set = run(&sds, &config);
    for (j, &sd) in sds.iter().enumerate() {
        let (m, _) = mean_sd(&column(&set, j));
        let mcse = sd / ess_bulk(set.param_draws(j).view()).unwrap().sqrt();
        assert!(m.abs() < 3.0 * mcse, "x{j}: mean {m}, mcse {mcse}");
    }
}

#[test]
fn runs_are_bit_identical_under_a_fixed_seed() {
    let config = SamplerConfig {
        chains: 3,
        warmup_iters: 200,
        sampling_iters: 200,
        seed: 42,
        ..Default::default()
    };
    let a = run(&[1.0, 2.0], &config);
    let b = run(&[1.0, 2.0], &config);
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.stats, b.stats);
    let c = run(
        &[1.0, 2.0],
        &SamplerConfig {
            seed: 43,
            ..config.clone()
        },
    );
    assert_ne!(a.draws, c.draws);
}

#[test]
fn chains_are_not_copies_of_each_other() {
    let config = SamplerConfig {
        warmup_iters: 200,
        sampling_iters: 300,
        seed: 7,
        ..Default::default()
    };
    let set = run(&[1.0], &config);
    let draws = set.param_draws(0);
    for a in 0..4 {
        for b in (a + 1)..4 {
            let x: Vec<f64> = draws.row(a).to_vec();
            let y: Vec<f64> = draws.row(b).to_vec();
            let (mx, sx) = mean_sd(&x);
            let (my, sy) = mean_sd(&y);
            let cov = x
                .iter()
                .zip(&y)
                .map(|(p, q)| (p - mx) * (q - my))
                .sum::<f64>()
                / (x.len() as f64 - 1.0);
            assert!((cov / (sx * sy)).abs() < 0.2, "chains {a},{b}");
        }
    }
}

#[test]
fn draws_pass_a_ks_test_against_the_normal_cdf() {
    let config = SamplerConfig {
        seed: 5,
        ..Default::default()
    };
    let set = run(&[1.0], &config);
    let mut x = column(&set, 0);
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = bayes_cancel::mathkernels::normal_cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / n.sqrt(), "D = {d}");
}

#[test]
fn accept_stat_tracks_the_target() {
    let config = SamplerConfig {
        seed: 3,
        ..Default::default()
    };
    let set = run(&[1.0], &config);
    let mean = |stats: Vec<f64>| stats.iter().sum::<f64>() / stats.len() as f64;
    // the step-size controller equilibrates while it is learning
    let adapting = mean(
        set.warmup_stats
            .iter()
            .flat_map(|c| c[75..].iter().map(|s| s.accept_stat))
            .collect(),
    );
    assert!(
        (adapting - 0.8).abs() < 0.05,
        "warmup accept_stat {adapting}"
    );
    // the averaged final step is slightly more cautious than the iterates
    let sampling = mean(set.stats.iter().flatten().map(|s| s.accept_stat).collect());
    assert!(
        (0.75..0.97).contains(&sampling),
        "sampling accept_stat {sampling}"
    );
}

#[test]
fn higher_target_accept_gives_smaller_steps() {
    let step = |target_accept: f64| {
        let config = SamplerConfig {
            target_accept,
            seed: 21,
            ..Default::default()
        };
        let set = run(&[1.0, 2.0, 0.5], &config);
        set.stats[0][0].step_size
    };
    let (lo, hi) = (step(0.6), step(0.99));
    assert!(lo > hi, "{lo} {hi}");
}

#[test]
fn mass_matrix_adapts_to_scale() {
    let sds = [1.0, 100.0];
    let config = SamplerConfig {
        seed: 8,
        ..Default::default()
    };
    let set = run(&sds, &config);
    for adapt in &set.adaptation {
        let ratio = adapt.inv_mass_diag[1] / adapt.inv_mass_diag[0];
        let truth = 100.0f64 * 100.0;
        assert!(
            ratio / truth > 1.0 / 3.0 && ratio / truth < 3.0,
            "ratio {ratio}"
        );
    }
}

#[test]
fn extreme_scales_are_recovered() {
    let sds = [1e-3, 1.0, 1e3];
    let config = SamplerConfig {
        seed: 8,
        ..Default::default()
    };
    let set = run(&sds, &config);
    for (j, s) in sds.iter().enumerate() {
        let (_, sd) = mean_sd(&column(&set, j));
        assert!((sd / s - 1.0).abs() < 0.08, "coordinate {j}: sd {sd}");
    }
}

#[test]
fn energy_error_is_small_after_adaptation() {
    let config = SamplerConfig {
        seed: 13,
        ..Default::default()
    };
    let set = run(&[1.0; 5], &config);
    let mut delta: Vec<f64> = set
        .stats
        .iter()
        .flatten()
        .filter(|s| !s.divergent)
        .map(|s| s.energy_error.abs())
        .collect();
    delta.sort_by(f64::total_cmp);
    let median = delta[delta.len() / 2];
    assert!(median < 0.2, "median |dH| {median}");
}

#[test]
fn chain_output_depends_only_on_its_index() {
    let target = Gaussian {
        sds: vec![1.0, 2.0],
    };
    let config = SamplerConfig {
        warmup_iters: 200,
        sampling_iters: 100,
        seed: 99,
        ..Default::default()
    };
    let set = sample(&target, names(2), &config).unwrap();
    let (draws, _, _) = run_chain(&target, &config, 1).unwrap();
    for (i, q) in draws.iter().enumerate() {
        for (j, &v) in q.iter().enumerate() {
            assert_eq!(set.draws[[1, i, j]], v);
        }
    }
}

#[test]
fn retained_draws_are_finite() {
    let set = run(
        &[1.0, 10.0],
        &SamplerConfig {
            seed: 2,
            ..Default::default()
        },
    );
    assert!(set.draws.iter().all(|v| v.is_finite()));
    assert!(set
        .stats
        .iter()
        .flatten()
        .all(|s| (0.0..=1.0).contains(&s.accept_stat)));
}

#[test]
fn warmup_zero_disables_adaptation() {
    let config = SamplerConfig {
        warmup_iters: 0,
        sampling_iters: 50,
        chains: 1,
        ..Default::default()
    };
    let set = run(&[1.0, 1.0], &config);
    assert_eq!(set.adaptation[0].inv_mass_diag, vec![1.0, 1.0]);
}

#[test]
fn mismatched_names_are_rejected() {
    let target = Gaussian { sds: vec![1.0; 2] };
    assert!(matches!(
        sample(&target, names(3), &SamplerConfig::default()),
        Err(Error::Shape(_))
    ));
}

#[test]
fn excessive_divergence_is_an_error() {
    /// A funnel-free cliff: the log-density falls off a wall at |x| > 1.
    struct Cliff;
    impl LogDensity for Cliff {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
            let x = theta[0];
            grad[0] = if x.abs() > 1.0 {
                -1e12 * x.signum()
            } else {
                0.0
            };
            if x.abs() > 1.0 {
                -1e12 * (x.abs() - 1.0)
            } else {
                0.0
            }
        }
    }
    let config = SamplerConfig {
        chains: 2,
        warmup_iters: 0,
        sampling_iters: 100,
        init_radius: 0.5,
        ..Default::default()
    };
    match sample(&Cliff, names(1), &config) {
        Err(Error::Divergence {
            divergent, total, ..
        }) => {
            assert_eq!(total, 200);
            assert!(divergent > 50);
        }
        other => panic!("expected divergence error, got {other:?}"),
    }
}
