//! Simulates the reference path and prints its event table.
//!
//! `cargo run --example simulate_path -- [seed]`; without a seed the noise
//! is switched off.

use ias_ipa::{Scenario, Thresholds};

fn main() -> ias_ipa::Result<()> {
    let seed: Option<u64> = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let sc = match seed {
        Some(_) => Scenario::default(),
        None => Scenario::deterministic(),
    };
    let th = Thresholds::default();
    let path = sc.path(&th, &sc.trace(seed.unwrap_or(0))?)?;
    path.check_invariants()?;

    println!(
        "{} events, {} complete cycles over {} days",
        path.k_t(),
        path.m_t(),
        path.horizon
    );
    println!(
        "{:>3} {:>4} {:>10} {:>8} {:>8} {:>8}",
        "k", "kind", "tau", "x1", "x2", "x3"
    );
    for e in &path.events {
        let s = e.state_pre;
        println!(
            "{:>3} {:>4} {:>10.4} {:>8.4} {:>8.4} {:>8.4}",
            e.k, e.kind, e.tau, s.x1, s.x2, s.x3
        );
    }
    for (a, b) in path.on_periods() {
        println!("on treatment {a:8.2} .. {b:8.2} ({:.1} days)", b - a);
    }
    Ok(())
}
