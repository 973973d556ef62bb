use ias_ipa::cost::sample_cost;
use ias_ipa::optimizer::{optimize, OptConfig};
use ias_ipa::validation::{central_difference, fd_report, unbiasedness_check, FdSettings};
use ias_ipa::{derive_seeds, Error, Scenario, Schedule, Thresholds};

#[test]
fn central_difference_is_second_order() {
    let sc = Scenario::deterministic();
    let th = Thresholds::default();
    let noise = sc.trace(0).unwrap();
    let base = sc.path(&th, &noise).unwrap();
    let cc = sc.cost_config();
    for i in 0..2 {
        let fd: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&rel_delta| {
                let s = FdSettings {
                    rel_delta,
                    max_retries: 0,
                    ..FdSettings::default()
                };
                let p = central_difference(&sc, &th, &noise, &base, i, &s, |p| {
                    Ok(vec![sample_cost(p, &cc)?])
                })
                .unwrap();
                assert!(p.k_t_match);
                p.values[0]
            })
            .collect();
        let ratio = (fd[0] - fd[1]) / (fd[1] - fd[2]);
        assert!((3.5..4.5).contains(&ratio), "theta{} ratio {ratio}", i + 1);
    }
}

#[test]
fn zero_noise_means_agree_with_zero_se() {
    let sc = Scenario::deterministic();
    let r = unbiasedness_check(
        &sc,
        &Thresholds::default(),
        &derive_seeds(1, 30),
        &FdSettings::default(),
    )
    .unwrap();
    assert!(r.passed());
    for i in 0..2 {
        assert!(r.fd_se[i] < 1e-15);
        assert!((r.ipa_mean[i] - r.fd_mean[i]).abs() <= 1e-3 * r.fd_mean[i].abs());
    }
}

#[test]
fn fd_report_flags_and_serializes() {
    let sc = Scenario::default();
    let r = fd_report(
        &sc,
        &Thresholds::default(),
        &sc.trace(3).unwrap(),
        &FdSettings::default(),
    )
    .unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in [
        "theta",
        "delta",
        "dL_ipa",
        "dL_fd",
        "rel_error",
        "K_T_match",
        "retries",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(r.pass);
}

#[test]
fn no_events_means_zero_gradient_and_one_iteration() {
    let sc = Scenario::deterministic();
    let th = Thresholds {
        theta1: 1.0,
        theta1_min: 0.5,
        ..Thresholds::default()
    };
    let g = sc.gradient(&th, &sc.trace(0).unwrap()).unwrap();
    assert_eq!(g.k_t, 1);
    assert_eq!(g.dl(), [0.0, 0.0]);
    let run = optimize(&sc, &th, &OptConfig::default(), 0).unwrap();
    assert_eq!(run.iterations(), 1);
    assert!(run.converged);
    assert_eq!(run.theta_star, th.theta());
}

#[test]
fn inward_gradient_leaves_the_boundary() {
    let sc = Scenario::deterministic();
    let th = Thresholds::default().with_theta([2.0, 10.0]);
    let opt = OptConfig {
        rho0: 0.5,
        schedule: Schedule::Constant,
        max_iters: 2,
        ..OptConfig::default()
    };
    let run = optimize(&sc, &th, &opt, 0).unwrap();
    assert!(run.rows[0].dl1 < 0.0);
    assert!(run.rows[1].theta1 > th.theta1_min);
    assert!(run.rows[1].theta1 < th.theta1_max);
}

#[test]
fn small_constant_step_is_monotone() {
    let sc = Scenario::deterministic();
    let opt = OptConfig {
        rho0: 5.0,
        schedule: Schedule::Constant,
        max_iters: 30,
        ..OptConfig::default()
    };
    let run = optimize(&sc, &Thresholds::default(), &opt, 0).unwrap();
    for w in run.rows.windows(2) {
        assert!(w[1].l_mean <= w[0].l_mean, "{:?} -> {:?}", w[0], w[1]);
    }
}

#[test]
fn infeasible_start_rejected() {
    let sc = Scenario::deterministic();
    let th = Thresholds::default().with_theta([9.0, 10.0]);
    let err = optimize(&sc, &th, &OptConfig::default(), 0).unwrap_err();
    assert!(matches!(err, Error::Validation { .. }));
}
