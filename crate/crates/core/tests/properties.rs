//! Property tests over the public API.

use plrvo::dpsgd::{train, Hyper, TrainingRun};
use plrvo::optimizer::JobSkeleton;
use plrvo::sampler::{sample_laplace_noise, seeded_rng};
use plrvo::{
    compose, epsilon_from_delta, epsilon_from_delta_coarse, gaussian_subsampled_log_moment,
    laplace_univariate_log_moment, plrv_multivariate_log_moment, plrv_univariate_log_moment, sample_plrv_noise, solve,
    Accountant, AccountingJob, FeasibilityConfig, GammaPlrvParams, GaussianParams, LambdaSearch, LaplaceParams,
    Mechanism, PrivacyTarget, SumMode,
};
use proptest::prelude::*;

const SLACK: f64 = 1e-10;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plrv_moment_nondecreasing_in_lambda(
        k in 2.0f64..500.0, theta in 1e-5f64..1e-2, x in 0.0f64..1.0, zeta in 1e-4f64..0.5,
    ) {
        let p = GammaPlrvParams::new(k, theta).unwrap();
        let top = ((0.9 / (x * theta).max(1e-12)).floor() as u32).clamp(2, 24);
        let mut prev = 0.0;
        for lambda in 1..=top {
            let a = plrv_univariate_log_moment(&p, x, zeta, lambda).unwrap();
            prop_assert!(a >= prev - SLACK, "lambda {lambda}: {a} < {prev}");
            prev = a;
        }
    }

    #[test]
    fn laplace_moment_nondecreasing_in_zeta_and_x(
        b in 0.1f64..50.0, x in 0.0f64..2.0, zeta in 1e-4f64..0.5, lambda in 1u32..32,
    ) {
        let p = LaplaceParams::new(b).unwrap();
        let base = laplace_univariate_log_moment(&p, x, zeta, lambda).unwrap();
        prop_assert!(base >= -SLACK);
        prop_assert!(laplace_univariate_log_moment(&p, x, (zeta * 1.5).min(1.0), lambda).unwrap() >= base - SLACK);
        prop_assert!(laplace_univariate_log_moment(&p, x * 1.5, zeta, lambda).unwrap() >= base - SLACK);
    }

    #[test]
    fn gaussian_moment_nonincreasing_in_sigma(sigma in 0.5f64..20.0, zeta in 1e-4f64..0.5, lambda in 1u32..64) {
        let tight = gaussian_subsampled_log_moment(&GaussianParams::new(sigma).unwrap(), zeta, lambda).unwrap();
        let loose = gaussian_subsampled_log_moment(&GaussianParams::new(sigma * 1.3).unwrap(), zeta, lambda).unwrap();
        prop_assert!(loose <= tight + SLACK * (1.0 + tight.abs()));
    }

    #[test]
    fn composition_is_linear_and_epsilon_grows_with_steps(sigma in 0.7f64..5.0, steps in 1u64..2000) {
        let job = AccountingJob::new(1, 0.01, 1, 1.0, 1e-5, 32).unwrap();
        let mut acc = Accountant::new(Mechanism::Gaussian(GaussianParams::new(sigma).unwrap()), job, SumMode::Exact).unwrap();
        acc.fill().unwrap();
        let one = acc.curve().unwrap();
        let t = compose(&one, steps).unwrap();
        let t2 = compose(&t, 2).unwrap();
        prop_assert_eq!(t2.composed_steps(), 2 * steps);
        for (lambda, a) in one.points() {
            let want = a * steps as f64;
            prop_assert!((t.alpha(lambda).unwrap() - want).abs() <= 1e-12 * want.abs().max(1e-300));
        }
        let e1 = epsilon_from_delta(&t, 1e-5).unwrap().epsilon;
        let e2 = epsilon_from_delta(&t2, 1e-5).unwrap().epsilon;
        prop_assert!(e2 >= e1);
    }

    #[test]
    fn coarse_search_never_beats_full(sigma in 0.7f64..5.0, steps in 1u64..5000, delta_exp in 3i32..9) {
        let delta = 10f64.powi(-delta_exp);
        let job = AccountingJob::new(1, 0.02, 1, 1.0, delta, 64).unwrap();
        let mut acc = Accountant::new(Mechanism::Gaussian(GaussianParams::new(sigma).unwrap()), job, SumMode::Exact).unwrap();
        acc.fill().unwrap();
        let curve = compose(&acc.curve().unwrap(), steps).unwrap();
        let full = epsilon_from_delta(&curve, delta).unwrap();
        let coarse = epsilon_from_delta_coarse(&curve, delta).unwrap();
        prop_assert!(coarse.epsilon >= full.epsilon);
        prop_assert!(coarse.epsilon <= full.epsilon * 1.02 + 1e-12);
    }
}

#[test]
fn multivariate_moment_grows_with_clip_and_dim() {
    let p = GammaPlrvParams::new(50.0, 1e-3).unwrap();
    let at = |clip: f64, n: u64| {
        let job = AccountingJob::new(1, 0.05, n, clip, 1e-5, 8).unwrap();
        plrv_multivariate_log_moment(&p, &job, 8).unwrap()
    };
    let base = at(1.0, 100);
    assert!(at(2.0, 100) >= base);
    assert!(at(1.0, 400) >= base);
    assert!(base > 0.0);
}

#[test]
fn epsilon_grows_with_steps_through_accountant() {
    let p = GammaPlrvParams::new(100.0, 5e-4).unwrap();
    let job = AccountingJob::new(10, 0.01, 50, 1.0, 1e-5, 32).unwrap();
    let mut acc = Accountant::new(Mechanism::Plrvo(p), job, SumMode::Exact).unwrap();
    let mut prev = 0.0;
    for t in [1, 10, 100, 1000] {
        let e = acc.epsilon(t, 1e-5, LambdaSearch::Full).unwrap().epsilon;
        assert!(e > prev, "T={t}: {e} <= {prev}");
        prev = e;
    }
}

#[test]
fn sampler_is_reproducible_per_seed_and_stream() {
    let p = GammaPlrvParams::new(20.0, 0.01).unwrap();
    let a = sample_plrv_noise(&p, 16, &mut seeded_rng(7, 0));
    let b = sample_plrv_noise(&p, 16, &mut seeded_rng(7, 0));
    let c = sample_plrv_noise(&p, 16, &mut seeded_rng(7, 1));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn plrv_draw_shares_one_scale_across_coordinates() {
    // Given b, each |coordinate| is exponential with mean b and median b ln 2.
    let p = GammaPlrvParams::new(20.0, 0.01).unwrap();
    let draw = sample_plrv_noise(&p, 200_000, &mut seeded_rng(3, 0));
    let b = draw.scale_b;
    let mean = draw.mean_abs();
    assert!((mean / b - 1.0).abs() < 0.01, "mean {mean} vs b {b}");
    let mut abs: Vec<f64> = draw.coords.iter().map(|z| z.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let median = abs[abs.len() / 2];
    assert!((median / (b * std::f64::consts::LN_2) - 1.0).abs() < 0.02);
}

#[test]
fn plrv_scale_has_inverse_gamma_mean() {
    // E[b] = 1 / ((k - 1) theta) for b = 1/u, u ~ Gamma(k, theta).
    let (k, theta) = (20.0, 0.01);
    let p = GammaPlrvParams::new(k, theta).unwrap();
    let mut rng = seeded_rng(11, 0);
    let draws = 200_000;
    let mean = (0..draws)
        .map(|_| sample_plrv_noise(&p, 1, &mut rng).scale_b)
        .sum::<f64>()
        / draws as f64;
    let want = 1.0 / ((k - 1.0) * theta);
    assert!((mean / want - 1.0).abs() < 0.01, "{mean} vs {want}");
}

#[test]
fn laplace_draw_has_fixed_scale() {
    let p = LaplaceParams::new(2.5).unwrap();
    let draw = sample_laplace_noise(&p, 200_000, &mut seeded_rng(0, 0));
    assert_eq!(draw.scale_b, 2.5);
    assert!((draw.mean_abs() / 2.5 - 1.0).abs() < 0.01);
}

fn small_run(seed: u64) -> TrainingRun {
    TrainingRun {
        dim: 3,
        train_size: 2000,
        test_size: 1000,
        separation: 3.0,
        hyper: Hyper {
            learning_rate: 0.1,
            epochs: 2,
            batch: 50,
            clip: 1.0,
        },
        mechanism: Mechanism::Gaussian(GaussianParams::new(1.0).unwrap()),
        delta: 1e-5,
        lambda_max: 32,
        seed,
    }
}

#[test]
fn training_is_deterministic_and_learns() {
    let run = small_run(9);
    let a = train(&run).unwrap();
    let b = train(&run).unwrap();
    assert_eq!(a.final_weights, b.final_weights);
    assert_eq!(a.steps_executed, run.steps());
    assert!(a.test_accuracy > 0.9, "accuracy {}", a.test_accuracy);
    let other = train(&small_run(10)).unwrap();
    assert_ne!(a.final_weights, other.final_weights);
}

#[test]
fn training_ledger_matches_a_fresh_accountant() {
    let run = small_run(1);
    let ledger = train(&run).unwrap();
    let mut acc = Accountant::new(run.mechanism, ledger.accounted_job, SumMode::Exact).unwrap();
    let fresh = acc.job_epsilon(LambdaSearch::Full).unwrap();
    assert_eq!(fresh.epsilon, ledger.epsilon_report.epsilon);
}

#[test]
fn optimum_improves_with_a_looser_budget() {
    let job = JobSkeleton {
        steps_t: 50,
        sampling_rate_zeta: 0.05,
        model_dim_n: 10,
        lambda_max: 16,
    };
    let at = |eps: f64| {
        let cfg = FeasibilityConfig::new(1.0, Some(1.0), PrivacyTarget::new(eps, 1e-5).unwrap(), job).unwrap();
        solve(&cfg).unwrap()
    };
    let tight = at(2.0);
    let loose = at(4.0);
    assert!(tight.achieved_epsilon <= 2.0 && loose.achieved_epsilon <= 4.0);
    assert!(loose.snr >= tight.snr, "{} < {}", loose.snr, tight.snr);
}
