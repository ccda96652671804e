//! Randomized invariants over the transform, schedule, and config layers.

use ddis::config::ExperimentConfig;
use ddis::grid::{coeff_norm, field_norm_l2, make_grid, sine_forward, sine_inverse, Boundary, Field};
use ddis::score::make_schedule;
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sine_transform_round_trips(
        values in prop::collection::vec(-100.0f64..100.0, 64),
    ) {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let f = Field::new(grid, Array2::from_shape_vec((8, 8), values).unwrap()).unwrap();
        let back = sine_inverse(&sine_forward(&f).unwrap()).unwrap();
        let err = field_norm_l2(&back.sub(&f).unwrap());
        prop_assert!(err <= 1e-11 * (1.0 + field_norm_l2(&f)));
    }

    #[test]
    fn transform_preserves_energy(
        values in prop::collection::vec(-100.0f64..100.0, 64),
    ) {
        let grid = make_grid(8, Boundary::Dirichlet).unwrap();
        let f = Field::new(grid, Array2::from_shape_vec((8, 8), values).unwrap()).unwrap();
        let c = sine_forward(&f).unwrap();
        let (a, b) = (field_norm_l2(&f), coeff_norm(&c));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn schedule_is_strictly_decreasing(
        sigma_min in 1e-4f64..0.1,
        span in 1.5f64..1000.0,
        rho in 0.5f64..10.0,
        n in 2usize..40,
    ) {
        let sched = make_schedule(sigma_min, sigma_min * span, rho, n).unwrap();
        for i in 0..sched.steps() {
            prop_assert!(sched.sigma(i) > sched.sigma(i + 1));
        }
        prop_assert!((sched.sigma(0) - sigma_min * span).abs() <= 1e-12 * sigma_min * span);
        prop_assert!((sched.sigma(n - 1) - sigma_min).abs() <= 1e-12 * sigma_min);
        prop_assert_eq!(sched.sigma(n), 0.0);
    }

    #[test]
    fn config_round_trips_through_json(
        resolution in 2usize..32,
        obs in 1usize..4,
        centers in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.resolution = resolution;
        cfg.obs_count = obs;
        cfg.prior_centers = centers;
        cfg.seed = seed;
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}
