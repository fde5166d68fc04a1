use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use privlq::agent::{calibrate, Environment};
use privlq::confidence::{estimate, logdet_cap, logdet_gram, GramStatistics};
use privlq::counters::{
    accountant_epsilon, calibrate_sigma, sensitivity_bounds, tree_depth, SigmaMode, TreeCounter,
};
use privlq::harness::{compute_regret, REGRET_TOLERANCE};
use privlq::linalg::{min_eigenvalue, spectral_norm, stream_rng};
use privlq::lq_system::{sample_instance, Instance, InstanceConfig};
use privlq::riccati::{linear_policy_cost, riccati_backward, GainSchedule};

fn instance_config() -> impl Strategy<Value = InstanceConfig> {
    (
        1usize..=3,
        1usize..=2,
        1usize..=8,
        0.05f64..0.4,
        0.25f64..1.0,
        0.0f64..1.0,
        0.0f64..1.0,
        any::<u64>(),
    )
        .prop_map(|(n, d, horizon, c_w, gamma, fa, fb, seed)| {
            let c_a = fa * (1.0 - c_w) * 0.999;
            let c_b = (fb * (1.0 - c_w - c_a) / gamma).min(0.999);
            InstanceConfig {
                n,
                d,
                horizon,
                episodes: 16,
                gamma,
                c_a,
                c_b,
                c_w,
                c_cost: 1.0,
                seed,
            }
        })
}

fn instance(cfg: &InstanceConfig) -> Instance {
    sample_instance(cfg).expect("strategy produces admissible configs")
}

fn random_gains(n: usize, d: usize, horizon: usize, scale: f64, seed: u64) -> GainSchedule {
    use rand::Rng;
    let mut rng = stream_rng(seed, 9);
    GainSchedule::new(
        (0..horizon)
            .map(|_| DMatrix::from_fn(d, n, |_, _| rng.random_range(-scale..scale)))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_instances_respect_norm_bounds(cfg in instance_config()) {
        let inst = instance(&cfg);
        let dynamics = &inst.system.dynamics;
        prop_assert!(dynamics.frobenius_norm() <= 1.0 + 1e-12);
        prop_assert!(spectral_norm(dynamics.a()) <= cfg.c_a + 1e-12);
        prop_assert!(spectral_norm(dynamics.b()) <= cfg.c_b + 1e-12);
        prop_assert!((inst.initial_state.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_matrices_dominate_state_cost(cfg in instance_config()) {
        let inst = instance(&cfg);
        let sys = &inst.system;
        let (values, _) = riccati_backward(&sys.dynamics, &sys.costs, cfg.horizon).unwrap();
        for h in 1..=cfg.horizon {
            let p = values.get(h).unwrap();
            prop_assert!((p - p.transpose()).amax() <= 1e-12 * (1.0 + p.amax()));
            prop_assert!(min_eigenvalue(&(p - sys.costs.q())) >= -1e-10);
        }
        prop_assert_eq!(values.get(cfg.horizon + 1).unwrap().amax(), 0.0);
    }

    #[test]
    fn riccati_gains_are_optimal(cfg in instance_config(), seed in any::<u64>()) {
        let inst = instance(&cfg);
        let sys = &inst.system;
        let (values, gains) = riccati_backward(&sys.dynamics, &sys.costs, cfg.horizon).unwrap();
        let x = &inst.initial_state;
        let best = values.cost_to_go(&sys.noise, x, 1).unwrap();
        let riccati = linear_policy_cost(&sys.dynamics, &sys.costs, &sys.noise, &gains, x, 1).unwrap();
        prop_assert!((riccati - best).abs() <= 1e-9 * best);
        let other = random_gains(cfg.n, cfg.d, cfg.horizon, 1.0, seed);
        let cost = linear_policy_cost(&sys.dynamics, &sys.costs, &sys.noise, &other, x, 1).unwrap();
        prop_assert!(cost >= best - 1e-9 * best);
    }

    #[test]
    fn regret_is_nonnegative_and_cumulative_nondecreasing(cfg in instance_config(), seed in any::<u64>()) {
        let inst = instance(&cfg);
        let plays = (1..=6).map(|k| {
            (k, inst.initial_state.clone(), random_gains(cfg.n, cfg.d, cfg.horizon, cfg.gamma, seed ^ k as u64))
        });
        let records = compute_regret(&inst.system, plays, cfg.horizon).unwrap();
        let mut last = 0.0;
        for r in &records {
            prop_assert!(r.episode_regret >= -REGRET_TOLERANCE);
            prop_assert!(r.cumulative_regret >= last - REGRET_TOLERANCE);
            last = r.cumulative_regret;
        }
    }

    #[test]
    fn noise_draws_lie_on_the_sphere(cfg in instance_config(), seed in any::<u64>()) {
        let noise = &instance(&cfg).system.noise;
        let mut rng = stream_rng(seed, 0);
        for _ in 0..20 {
            prop_assert!((noise.draw(&mut rng).norm() - cfg.c_w).abs() < 1e-12);
        }
    }

    #[test]
    fn episodes_stay_within_sensitivity_bounds(cfg in instance_config(), seed in any::<u64>()) {
        let inst = instance(&cfg);
        let mut env = Environment::new(&inst, seed, true);
        let gains = random_gains(cfg.n, cfg.d, cfg.horizon, cfg.gamma / (cfg.n as f64 * cfg.d as f64).sqrt(), seed);
        let x1 = env.next_initial_state();
        let (traj, violations) = env.run_episode(1, &x1, &gains, cfg.gamma).unwrap();
        prop_assert_eq!(violations, 0);
        let (d1, d2) = sensitivity_bounds(cfg.horizon, cfg.gamma);
        prop_assert!(traj.gram_sum().norm() <= d1);
        prop_assert!(traj.cross_sum().norm() <= d2);
    }

    #[test]
    fn counter_cover_partitions_prefix(capacity in 1usize..200, fed_frac in 0.0f64..1.0) {
        let fed = (capacity as f64 * fed_frac) as usize;
        let mut c = TreeCounter::new(capacity, (1, 1), false, 0.0, stream_rng(0, 0)).unwrap();
        for _ in 0..fed {
            c.feed(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        }
        let cover = c.cover();
        let mut next = 1;
        for &(first, last) in &cover {
            prop_assert_eq!(first, next);
            prop_assert!((last - first + 1).is_power_of_two());
            next = last + 1;
        }
        prop_assert_eq!(next, fed + 1);
        prop_assert!(cover.len() <= tree_depth(capacity).max(1) as usize);
        prop_assert!(c.nodes_created() <= (2 * capacity).saturating_sub(1));
        prop_assert_eq!(c.query(fed + 1).unwrap()[(0, 0)], fed as f64);
    }

    #[test]
    fn noiseless_counter_matches_running_sum(values in prop::collection::vec(-5.0f64..5.0, 1..80)) {
        let k = values.len();
        let mut c = TreeCounter::new(k, (2, 1), false, 0.0, stream_rng(1, 1)).unwrap();
        let mut exact = DMatrix::zeros(2, 1);
        for (t, v) in values.iter().enumerate() {
            prop_assert!((c.query(t + 1).unwrap() - &exact).amax() <= 1e-9);
            let m = DMatrix::from_column_slice(2, 1, &[*v, -2.0 * v]);
            c.feed(&m).unwrap();
            exact += m;
        }
    }

    #[test]
    fn symmetric_counter_releases_symmetric_sums(seed in any::<u64>(), fed in 0usize..40) {
        let mut c = TreeCounter::new(40, (3, 3), true, 2.5, stream_rng(seed, 2)).unwrap();
        for t in 0..fed {
            c.feed(&DMatrix::from_fn(3, 3, |i, j| (t + i * j) as f64)).unwrap();
        }
        let q = c.query(fed + 1).unwrap();
        prop_assert_eq!(&q, &q.transpose());
    }

    #[test]
    fn accountant_round_trip(
        eps in 0.05f64..20.0,
        log_delta in -8.0f64..-0.5,
        k in 2usize..100_000,
        sens in 0.1f64..100.0,
    ) {
        let delta = 10f64.powf(log_delta);
        let sigma = calibrate_sigma(eps, delta, k, sens, SigmaMode::Exact).unwrap();
        prop_assert!((accountant_epsilon(sigma, sens, k, delta) - eps / 2.0).abs() <= 1e-9 * eps.max(1.0));
    }

    #[test]
    fn calibration_ratio_and_positivity(
        n in 1usize..5, d in 1usize..4, k in 2usize..5000,
        alpha in 0.001f64..0.5, s1 in 0.01f64..1e4, s2 in 0.01f64..1e4,
    ) {
        let c = calibrate(n, d, k, alpha, s1, s2).unwrap();
        prop_assert!(c.big_lambda > 0.0 && c.nu > 0.0);
        prop_assert!((c.lambda_max - 3.0 * c.lambda_min).abs() <= 1e-12 * c.lambda_max);
        prop_assert!((c.eta - 2.0 * c.big_lambda).abs() <= 1e-12 * c.eta);
    }

    #[test]
    fn noiseless_ridge_identifies_parameters(seed in any::<u64>(), n in 1usize..4, d in 1usize..3) {
        use rand::Rng;
        let mut rng = stream_rng(seed, 3);
        let p = n + d;
        let theta = DMatrix::from_fn(p, n, |_, _| rng.random_range(-0.5..0.5));
        let z = DMatrix::from_fn(4 * p, p, |_, _| rng.random_range(-1.0..1.0));
        let next = &z * &theta;
        let lambda = 1e-9;
        let stats = GramStatistics::new(
            z.transpose() * &z + DMatrix::identity(p, p) * lambda,
            z.transpose() * next,
            2,
        ).unwrap();
        let est = estimate(&stats).unwrap();
        prop_assert!((est - theta).amax() <= 1e-6);
    }

    #[test]
    fn logdet_cap_bounds_any_admissible_gram(
        seed in any::<u64>(), rows in 1usize..60, gamma in 0.1f64..2.0, lambda in 0.01f64..10.0,
    ) {
        use rand::Rng;
        let (n, d, h) = (2, 1, 5);
        let mut rng = stream_rng(seed, 4);
        let mut gram = DMatrix::zeros(3, 3);
        for _ in 0..rows.min(h * 12) {
            let z: DVector<f64> = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let scale: f64 = rng.random_range(0.0..1.0);
            let z = &z * ((1.0 + gamma) / z.norm().max(1e-12) * scale);
            gram += &z * z.transpose();
        }
        let cap = logdet_cap(n, d, h, 12, gamma, lambda);
        prop_assert!(logdet_gram(&gram, lambda).unwrap() <= cap + 1e-9);
    }
}
