//! Mean IPA gradient against mean CRN finite differences over fresh seeds.

use ias_ipa::validation::{unbiasedness_check, FdSettings};
use ias_ipa::{derive_seeds, Scenario, Thresholds};

fn main() -> ias_ipa::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let sc = Scenario::default();
    let th = Thresholds::default();
    let r = unbiasedness_check(&sc, &th, &derive_seeds(2016, n), &FdSettings::default())?;
    for i in 0..2 {
        println!(
            "theta{}: ipa {:+.6e} +/- {:.2e}  fd {:+.6e} +/- {:.2e}  |diff| / pooled se = {:.3}",
            i + 1,
            r.ipa_mean[i],
            r.ipa_se[i],
            r.fd_mean[i],
            r.fd_se[i],
            r.mean_diff[i].abs() / r.pooled_se[i]
        );
    }
    println!(
        "{} paths, {} dropped, pass = {}",
        r.n_paths,
        r.dropped,
        r.passed()
    );
    Ok(())
}
