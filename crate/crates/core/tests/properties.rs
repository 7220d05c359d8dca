use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wpinn_core::loss::{log_objective, total_magnitude_normalized, LossStrategy};
use wpinn_core::problem::{lambda_original, laplace_eigen, optimal_lambda, poisson_eigen};
use wpinn_core::sampling::{adaptive_check, sample_boundary, sample_interior};
use wpinn_core::{AdaptiveState, Decision, Network, NetworkArchitecture};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_points_touch_a_face(dim in 1usize..6, n in 1usize..200, seed: u64) {
        let pts = sample_boundary(dim, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(pts.len(), n);
        for x in pts.iter() {
            prop_assert!(x.iter().all(|&c| (0.0..=1.0).contains(&c)));
            prop_assert!(x.iter().any(|&c| c == 0.0 || c == 1.0));
        }
    }

    #[test]
    fn interior_points_are_strictly_inside(dim in 1usize..6, n in 1usize..200, seed: u64) {
        let pts = sample_interior(dim, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(pts.coords().iter().all(|&c| c > 0.0 && c < 1.0));
    }

    #[test]
    fn trigger_matches_thresholds(
        ti in 1e-12f64..1e3, tb in 1e-12f64..1e3, ri in 0.0f64..10.0, rb in 0.0f64..10.0, dim in 1usize..4,
    ) {
        let state = AdaptiveState::new(dim, 8, 8, 5.0, 0).unwrap();
        let d = adaptive_check((ti, tb), (ri * ti, rb * tb), &state);
        prop_assert_eq!(d.doubles_interior(), ri * ti > 5.0 * ti);
        prop_assert_eq!(d.doubles_boundary(), dim > 1 && rb * tb > 5.0 * tb);
    }

    #[test]
    fn doubling_never_shrinks(decisions in proptest::collection::vec(0u8..4, 0..6), dim in 1usize..3) {
        let mut state = AdaptiveState::new(dim, 2, 2, 5.0, 3).unwrap();
        for code in decisions {
            let (ni, nb) = (state.n_interior, state.n_boundary);
            let decision = [Decision::Keep, Decision::DoubleInterior, Decision::DoubleBoundary, Decision::DoubleBoth][code as usize];
            state.apply(decision).unwrap();
            prop_assert!(state.n_interior >= ni && state.n_boundary >= nb);
            prop_assert_eq!(state.train.interior.len(), state.n_interior);
            prop_assert_eq!(state.validation.boundary.len(), state.n_boundary);
        }
    }

    #[test]
    fn log_objective_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let (la, lb) = (log_objective(a).unwrap(), log_objective(b).unwrap());
        prop_assert_eq!(a < b, la < lb);
    }

    #[test]
    fn lambda_is_below_the_original_weight(k in 1u32..12) {
        let problem = laplace_eigen(&[k as f64 * std::f64::consts::PI]).unwrap();
        let lambda = optimal_lambda(&problem.closed_form_bounds().unwrap()).unwrap();
        prop_assert!(lambda > 0.0 && lambda < lambda_original(&problem));
    }

    #[test]
    fn normalized_total_ignores_operator_scale(log_c1 in -3.0f64..3.0, log_c2 in -3.0f64..3.0, seed: u64) {
        let problem = poisson_eigen(2.0 * std::f64::consts::PI).unwrap();
        let net = Network::new(NetworkArchitecture::new(2, vec![6, 6]).unwrap());
        let params = net.glorot_init(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let interior = sample_interior(2, 16, &mut rng).unwrap();
        let boundary = sample_boundary(2, 16, &mut rng).unwrap();
        let strategy = LossStrategy::magnitude_normalized(2.0, None).unwrap();
        let base = total_magnitude_normalized(&problem, &net, params.values(), &interior, &boundary, &strategy).unwrap().total;
        let scaled = problem.scaled(10f64.powf(log_c1), 10f64.powf(log_c2));
        let other = total_magnitude_normalized(&scaled, &net, params.values(), &interior, &boundary, &strategy).unwrap().total;
        prop_assert!((other / base - 1.0).abs() < 1e-11, "{} vs {}", base, other);
    }
}
