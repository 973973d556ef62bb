//! Structural cross-checks: the integrated androgen level against its closed
//! form, variational propagation against closed-form IPA factors, and event
//! times under step refinement.

use ias_ipa::validation::{androgen_check, convergence_check, factor_check};
use ias_ipa::{Scenario, Thresholds};

fn main() -> ias_ipa::Result<()> {
    let th = Thresholds::default();

    let sc = Scenario::deterministic();
    let noise = sc.trace(0)?;
    let path = sc.path(&th, &noise)?;
    println!(
        "androgen closed form, max abs gap: {:.3e}",
        androgen_check(&sc, &path)?
    );

    let sc = Scenario::default();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let noise = sc.trace(seed)?;
        let path = sc.path(&th, &noise)?;
        for g in factor_check(&sc, &path, &noise)? {
            worst = worst.max(g.rel_gap);
        }
    }
    println!("IPA factors vs propagation, worst relative gap: {worst:.3e}");

    let sc = Scenario::deterministic();
    let c = convergence_check(&sc, &th, &sc.trace(0)?, 3)?;
    println!("dt {:?}", c.dts);
    println!("max event-time change {:?}", c.event_time_change);
    println!("observed order {:?}", c.observed_order);
    Ok(())
}
