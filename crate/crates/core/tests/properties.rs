use ias_ipa::model::{EventKind, Mode};
use ias_ipa::optimizer::{project, projected_gradient_norm};
use ias_ipa::{Scenario, Thresholds};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn paths_satisfy_invariants(
        seed in any::<u64>(),
        theta1 in 2.5f64..5.5,
        theta2 in 7.5f64..15.0,
    ) {
        let sc = Scenario::default();
        let th = Thresholds::default().with_theta([theta1, theta2]);
        let path = sc.path(&th, &sc.trace(seed).unwrap()).unwrap();
        path.check_invariants().unwrap();
        prop_assert_eq!(path.clamped_steps, 0);
        let mut mode = Mode::On;
        for e in &path.events {
            prop_assert_eq!(e.kind, EventKind::armed_in(mode));
            mode = mode.flipped();
            let target = [theta1, theta2][e.kind.theta_index()];
            prop_assert!((e.state_pre.psa() - target).abs() < 1e-6);
        }
        prop_assert_eq!(path.final_sample().state.q, mode);
        let g = sc.gradient(&th, &sc.trace(seed).unwrap()).unwrap();
        prop_assert!(g.l > 0.0 && g.dl().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_same_path(seed in any::<u64>()) {
        let sc = Scenario::default();
        let th = Thresholds::default();
        let a = sc.path(&th, &sc.trace(seed).unwrap()).unwrap();
        let b = sc.path(&th, &sc.trace(seed).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(t1 in -10f64..20.0, t2 in -10f64..30.0) {
        let th = Thresholds::default();
        let p = project([t1, t2], &th);
        prop_assert_eq!(project(p, &th), p);
        prop_assert!(th.with_theta(p).validate().is_ok());
    }

    #[test]
    fn projected_norm_never_exceeds_scaled_norm(
        t1 in 2.0f64..6.0, t2 in 7.0f64..16.0, g1 in -1f64..1.0, g2 in -1f64..1.0,
    ) {
        let th = Thresholds::default();
        let full = ((t1 * g1).powi(2) + (t2 * g2).powi(2)).sqrt();
        prop_assert!(projected_gradient_norm([t1, t2], [g1, g2], &th) <= full);
    }
}
