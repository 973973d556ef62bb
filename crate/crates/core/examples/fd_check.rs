//! Finite differences under common random numbers against the IPA gradient,
//! for the cost and for every event time.

use ias_ipa::validation::{event_time_fd, fd_report, FdSettings};
use ias_ipa::{Scenario, Thresholds};

fn main() -> ias_ipa::Result<()> {
    let th = Thresholds::default();
    let fd = FdSettings::default();

    let sc = Scenario::deterministic();
    let noise = sc.trace(0)?;
    let report = fd_report(&sc, &th, &noise, &fd)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    println!("event-time derivatives (zero noise):");
    for c in event_time_fd(
        &sc,
        &th,
        &noise,
        &FdSettings {
            rel_delta: 1e-6,
            ..fd
        },
    )? {
        let rel = |i: usize| c.rel_error[i].map_or(f64::NAN, |r| r);
        println!(
            "  tau_{:<2} {} {:9.3}  ipa ({:+.5e}, {:+.5e})  rel ({:.1e}, {:.1e})",
            c.k,
            c.kind,
            c.tau,
            c.ipa[0],
            c.ipa[1],
            rel(0),
            rel(1)
        );
    }

    let sc = Scenario::default();
    println!("noisy seeds:");
    for seed in 0..5 {
        let r = fd_report(&sc, &th, &sc.trace(seed)?, &fd)?;
        println!(
            "  seed {seed}: rel ({:.2e}, {:.2e}) retries {:?} pass {}",
            r.rel_error[0].unwrap_or(f64::NAN),
            r.rel_error[1].unwrap_or(f64::NAN),
            r.retries,
            r.pass
        );
    }
    Ok(())
}
