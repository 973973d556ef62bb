//! Projected stochastic gradient descent on the two thresholds.

use ias_ipa::optimizer::optimize_with;
use ias_ipa::{OptConfig, Scenario, Thresholds};

fn main() -> ias_ipa::Result<()> {
    let th = Thresholds::default();
    let runs = [
        (
            "zero noise, one path per step",
            Scenario::deterministic(),
            OptConfig::default(),
        ),
        (
            "noisy, 8 paths per step",
            Scenario::default(),
            OptConfig {
                batch_size: 8,
                max_iters: 30,
                ..OptConfig::default()
            },
        ),
    ];
    for (label, sc, opt) in runs {
        println!("{label}");
        let out = optimize_with(&sc, &th, &opt, 11, |row, step| {
            println!(
                "  {:>3} theta ({:.4}, {:.4}) L {:.6} dL ({:+.3e}, {:+.3e}) |pg| {:.2e}",
                row.iter, row.theta1, row.theta2, row.l_mean, row.dl1, row.dl2, step.pg_norm
            );
        })?;
        println!(
            "  theta* = ({:.4}, {:.4}), converged = {}",
            out.theta_star[0], out.theta_star[1], out.converged
        );
    }
    Ok(())
}
