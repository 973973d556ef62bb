//! IPA gradient of the sample cost with its per-term breakdown.

use ias_ipa::{Scenario, Thresholds};

fn main() -> ias_ipa::Result<()> {
    let th = Thresholds::default();
    for (label, sc, seed) in [
        ("zero noise", Scenario::deterministic(), 0),
        ("noisy, seed 7", Scenario::default(), 7),
    ] {
        let g = sc.gradient(&th, &sc.trace(seed)?)?;
        println!("{label}: L = {:.6}, K_T = {}, M_T = {}", g.l, g.k_t, g.m_t);
        for i in 0..2 {
            println!(
                "  dL/dtheta{} = {:+.6e}  (psa {:+.3e}, duration {:+.3e}, incomplete {:+.3e})",
                i + 1,
                g.dl()[i],
                g.terms.psa[i],
                g.terms.duration[i],
                g.terms.incomplete[i]
            );
        }
    }
    Ok(())
}
