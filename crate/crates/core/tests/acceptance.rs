//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use ias_ipa::io::{event_rows, read_csv_file, EventRow};
use ias_ipa::model::EventKind;
use ias_ipa::optimizer::{optimize, OptConfig};
use ias_ipa::validation::{
    androgen_check, event_time_fd, factor_check, fd_report, unbiasedness_check, FdSettings,
};
use ias_ipa::{derive_seeds, Scenario, Schedule, SeedPolicy, Thresholds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Option<Duration>, Check); 9] = [
        (
            "closed-form androgen",
            Some(Duration::from_secs(1)),
            c1_androgen,
        ),
        (
            "two-route IPA factors",
            Some(Duration::from_secs(10)),
            c2_factors,
        ),
        (
            "deterministic gradient vs FD",
            Some(Duration::from_secs(5)),
            c3_deterministic,
        ),
        (
            "pathwise CRN gradient vs FD",
            Some(Duration::from_secs(30)),
            c4_pathwise,
        ),
        (
            "unbiasedness over 100 paths",
            Some(Duration::from_secs(120)),
            c5_unbiased,
        ),
        ("event-time sensitivities", None, c6_event_times),
        ("structural invariants", None, c7_invariants),
        (
            "optimizer sanity",
            Some(Duration::from_secs(60)),
            c8_optimizer,
        ),
        ("reproducibility", None, c9_reproducible),
    ];
    let mut failed = 0;
    for (n, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check);
        let took = start.elapsed();
        let (mut pass, mut detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                ),
            ),
        };
        if let Some(b) = budget {
            if took > *b {
                pass = false;
                detail.push_str(&format!("; over the {:.0?} budget", b));
            }
        }
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {detail} [{:.2?}]",
            n + 1,
            if pass { "PASS" } else { "FAIL" },
            took
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn c1_androgen() -> Outcome {
    let sc = Scenario::deterministic();
    let th = Thresholds::default();
    let path = sc.path(&th, &sc.trace(0).unwrap()).unwrap();
    let gap = androgen_check(&sc, &path).unwrap();
    let cycles = path.m_t();
    outcome(
        gap <= 1e-6 && cycles >= 5,
        format!("max |x3 - closed form| = {gap:.2e} over {cycles} complete cycles"),
    )
}

fn c2_factors() -> Outcome {
    let sc = Scenario::default();
    let th = Thresholds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut intervals = 0;
    for seed in derive_seeds(2, 20) {
        let theta = [rng.random_range(3.0..5.0), rng.random_range(8.0..12.0)];
        let th = th.with_theta(theta);
        let noise = sc.trace(seed).unwrap();
        let path = sc.path(&th, &noise).unwrap();
        for g in factor_check(&sc, &path, &noise).unwrap() {
            worst = worst.max(g.rel_gap);
            intervals += 1;
        }
    }
    outcome(
        worst <= 1e-6,
        format!("worst relative gap {worst:.2e} over {intervals} intervals of 20 paths"),
    )
}

fn c3_deterministic() -> Outcome {
    let sc = Scenario::deterministic();
    let fd = FdSettings {
        rel_delta: 1e-5,
        tolerance: 1e-3,
        ..FdSettings::default()
    };
    let r = fd_report(&sc, &Thresholds::default(), &sc.trace(0).unwrap(), &fd).unwrap();
    outcome(
        r.pass,
        format!(
            "rel error ({:.2e}, {:.2e}), K_T match {:?}",
            r.rel_error[0].unwrap_or(f64::NAN),
            r.rel_error[1].unwrap_or(f64::NAN),
            r.k_t_match
        ),
    )
}

fn c4_pathwise() -> Outcome {
    let sc = Scenario::default();
    let th = Thresholds::default();
    let fd = FdSettings::default();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut retried = 0;
    for seed in 0..20u64 {
        let r = fd_report(&sc, &th, &sc.trace(seed).unwrap(), &fd).unwrap();
        for e in r.rel_error.iter().flatten() {
            worst = worst.max(*e);
        }
        if r.retries.iter().any(|&n| n > 0) {
            retried += 1;
        }
        if !r.pass {
            failures.push(seed);
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "worst rel error {worst:.2e}, {retried}/20 paths needed a smaller step, failing seeds {failures:?}"
        ),
    )
}

fn c5_unbiased() -> Outcome {
    let sc = Scenario::default();
    let seeds = derive_seeds(0x5eed, 100);
    let r =
        unbiasedness_check(&sc, &Thresholds::default(), &seeds, &FdSettings::default()).unwrap();
    let z = |i: usize| r.mean_diff[i].abs() / r.pooled_se[i];
    outcome(
        r.passed() && r.n_paths == 100,
        format!(
            "|mean diff| / pooled SE = ({:.2e}, {:.2e}), means ipa ({:+.4e}, {:+.4e}), {} dropped",
            z(0),
            z(1),
            r.ipa_mean[0],
            r.ipa_mean[1],
            r.dropped
        ),
    )
}

fn c6_event_times() -> Outcome {
    let sc = Scenario::deterministic();
    let fd = FdSettings {
        rel_delta: 1e-6,
        ..FdSettings::default()
    };
    let checks = event_time_fd(&sc, &Thresholds::default(), &sc.trace(0).unwrap(), &fd).unwrap();
    let mut worst = 0.0f64;
    let mut ok = !checks.is_empty();
    for c in &checks {
        for i in 0..2 {
            match (c.fd[i], c.rel_error[i]) {
                // tau_1 does not depend on theta2 at all
                (Some(v), _) if c.ipa[i] == 0.0 && v == 0.0 => {}
                (Some(_), Some(r)) => {
                    worst = worst.max(r);
                    ok &= r <= 1e-3;
                }
                _ => ok = false,
            }
        }
    }
    outcome(
        ok,
        format!("{} events, worst rel error {worst:.2e}", checks.len()),
    )
}

fn c7_invariants() -> Outcome {
    let base = Thresholds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut paths = 0;
    let mut events = 0;
    let mut violations: Vec<String> = Vec::new();
    let mut cases: Vec<(Scenario, Thresholds, u64)> = vec![(Scenario::deterministic(), base, 0)];
    for seed in derive_seeds(7, 40) {
        let theta = [rng.random_range(2.5..5.5), rng.random_range(7.5..15.0)];
        cases.push((Scenario::default(), base.with_theta(theta), seed));
    }
    for (sc, th, seed) in cases {
        let path = sc.path(&th, &sc.trace(seed).unwrap()).unwrap();
        paths += 1;
        if let Err(e) = path.check_invariants() {
            violations.push(format!("seed {seed}: {e}"));
        }
        let mut expected = EventKind::E1;
        for e in &path.events {
            events += 1;
            let mut v = |what: &str| violations.push(format!("seed {seed} event {}: {what}", e.k));
            if e.kind != expected {
                v("alternation");
            }
            expected = match e.kind {
                EventKind::E1 => EventKind::E2,
                EventKind::E2 => EventKind::E1,
            };
            let (pre, post) = (e.state_pre, e.state_post);
            if pre.x1 != post.x1 || pre.x2 != post.x2 || pre.x3 != post.x3 {
                v("x continuity");
            }
            let tp = e.tau_prime;
            let z = e.ipa_post.zprime;
            match e.kind {
                EventKind::E1 => {
                    if post.z1 != 0.0 {
                        v("z1 reset");
                    }
                    if z[0] != [0.0, 0.0] || z[1] != [-tp[0], -tp[1]] {
                        v("clock derivative rule at e1");
                    }
                }
                EventKind::E2 => {
                    if post.z2 != 0.0 {
                        v("z2 reset");
                    }
                    if z[0] != [-tp[0], -tp[1]] || z[1] != [0.0, 0.0] {
                        v("clock derivative rule at e2");
                    }
                }
            }
        }
    }

    let opt = OptConfig {
        batch_size: 2,
        max_iters: 25,
        rho0: 20.0,
        schedule: Schedule::Constant,
        seed_policy: SeedPolicy::Fresh,
        ..OptConfig::default()
    };
    let run = optimize(&Scenario::default(), &base, &opt, 99).unwrap();
    let (lo, hi) = (base.lower_bounds(), base.upper_bounds());
    for r in &run.rows {
        let t = [r.theta1, r.theta2];
        if !(0..2).all(|i| lo[i] <= t[i] && t[i] <= hi[i]) {
            violations.push(format!("iterate {} outside the box: {t:?}", r.iter));
        }
    }
    let t = run.theta_star;
    if !(0..2).all(|i| lo[i] <= t[i] && t[i] <= hi[i]) {
        violations.push(format!("theta* outside the box: {t:?}"));
    }
    outcome(
        violations.is_empty(),
        format!(
            "{paths} paths, {events} events, {} optimizer iterates, violations {violations:?}",
            run.rows.len()
        ),
    )
}

fn c8_optimizer() -> Outcome {
    let opt = OptConfig::default();
    let run = optimize(&Scenario::deterministic(), &Thresholds::default(), &opt, 0).unwrap();
    let monotone = run.rows.windows(2).all(|w| w[1].l_mean <= w[0].l_mean);
    let costs: Vec<String> = run
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.l_mean))
        .collect();
    outcome(
        monotone && run.converged && run.iterations() <= opt.max_iters,
        format!(
            "L = [{}], theta* = ({:.4}, {:.4}) after {} iterations, converged {}",
            costs.join(", "),
            run.theta_star[0],
            run.theta_star[1],
            run.iterations(),
            run.converged
        ),
    )
}

fn run_cli(verb: &str, config: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_ias-ipa"))
        .arg(verb)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", "424242", "--no-timestamp"])
        .stdout(Stdio::null())
        .status()
        .expect("spawn ias-ipa");
    assert!(status.success(), "{verb} exited with {status}");
}

fn c9_reproducible() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"optimizer": {"batch_size": 3, "max_iters": 8}, "validation": {"n_paths": 0}}"#,
    )
    .unwrap();
    let files = [
        "trajectory.csv",
        "events.csv",
        "gradient.json",
        "opt_trace.csv",
    ];
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        run_cli("gradient", &config, &out);
        run_cli("optimize", &config, &out);
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        runs.push(bytes);
    }
    let same: Vec<bool> = (0..files.len()).map(|i| runs[0][i] == runs[1][i]).collect();

    // the emitted event table matches the in-memory path
    let sc = Scenario::default();
    let path = sc
        .path(&Thresholds::default(), &sc.trace(424242).unwrap())
        .unwrap();
    let written: Vec<EventRow> = read_csv_file(&dir.path().join("run0/events.csv")).unwrap();
    let consistent = written == event_rows(&path);

    outcome(
        same.iter().all(|&s| s) && consistent,
        format!(
            "byte-identical {:?}, events CSV matches the library path {consistent}",
            files.iter().zip(&same).collect::<Vec<_>>()
        ),
    )
}
