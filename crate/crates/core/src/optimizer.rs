//! Projected stochastic gradient descent on the threshold pair.
//!
//! Each iteration averages the IPA gradient over a batch of paths, steps
//! `theta <- Proj(theta - rho_l * mean dL)` and records a trace row.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::sample_gradient;
use crate::error::{Error, Result};
use crate::model::Thresholds;
use crate::scenario::{is_recoverable, Scenario, SeedStream};
use crate::validation::mean_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `rho0`
    Constant,
    /// `rho0 / (1 + l)`
    InvL,
    /// `rho0 / sqrt(1 + l)`
    InvSqrtL,
}

impl Schedule {
    pub fn step(self, rho0: f64, l: usize) -> f64 {
        let l = l as f64;
        match self {
            Schedule::Constant => rho0,
            Schedule::InvL => rho0 / (1.0 + l),
            Schedule::InvSqrtL => rho0 / (1.0 + l).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// New seeds every iteration.
    Fresh,
    /// The same `batch_size` seeds at every iteration.
    FixedPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub rho0: f64,
    pub schedule: Schedule,
    pub max_iters: usize,
    pub batch_size: usize,
    /// Stop when the projected, theta-scaled gradient norm drops below this.
    pub grad_tol: f64,
    pub seed_policy: SeedPolicy,
    /// Failed paths tolerated per gradient estimate before aborting.
    pub retry_budget: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            rho0: 100.0,
            schedule: Schedule::InvL,
            max_iters: 200,
            batch_size: 1,
            grad_tol: 1e-3,
            seed_policy: SeedPolicy::Fresh,
            retry_budget: 10,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Validation {
                field: field.into(),
                message,
            })
        };
        if !(self.rho0.is_finite() && self.rho0 > 0.0) {
            return bad("optimizer.rho0", format!("must be > 0, got {}", self.rho0));
        }
        if self.max_iters == 0 {
            return bad("optimizer.max_iters", "must be >= 1, got 0".into());
        }
        if self.batch_size == 0 {
            return bad("optimizer.batch_size", "must be >= 1, got 0".into());
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return bad(
                "optimizer.grad_tol",
                format!("must be finite and >= 0, got {}", self.grad_tol),
            );
        }
        Ok(())
    }
}

/// Clamps `theta` into the threshold box.
pub fn project(theta: [f64; 2], th: &Thresholds) -> [f64; 2] {
    let (lo, hi) = (th.lower_bounds(), th.upper_bounds());
    [theta[0].clamp(lo[0], hi[0]), theta[1].clamp(lo[1], hi[1])]
}

/// Norm of `theta_i * g_i`, skipping components pinned at a bound by a
/// gradient that points out of the box.
pub fn projected_gradient_norm(theta: [f64; 2], g: [f64; 2], th: &Thresholds) -> f64 {
    let (lo, hi) = (th.lower_bounds(), th.upper_bounds());
    let mut s = 0.0;
    for i in 0..2 {
        let pinned = (theta[i] <= lo[i] && g[i] > 0.0) || (theta[i] >= hi[i] && g[i] < 0.0);
        if !pinned {
            s += (theta[i] * g[i]).powi(2);
        }
    }
    s.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub l_mean: f64,
    pub mean: [f64; 2],
    /// Standard error of the mean; `NaN` with a single path.
    pub se: [f64; 2],
    pub seeds: Vec<u64>,
    pub dropped: usize,
}

impl GradientEstimate {
    pub fn se_defined(&self) -> bool {
        self.seeds.len() > 1
    }
}

/// Batch-mean IPA gradient. Paths are simulated in parallel; a path that
/// fails recoverably is replaced by one with a seed from `resample` until
/// `retry_budget` replacements have been used.
pub fn estimate_gradient(
    sc: &Scenario,
    th: &Thresholds,
    seeds: &[u64],
    retry_budget: usize,
    resample: &mut SeedStream,
) -> Result<GradientEstimate> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument {
            name: "seeds",
            reason: "batch must contain at least one seed".into(),
        });
    }
    let cc = sc.cost_config();
    let run = |seed: u64| -> Result<(u64, f64, [f64; 2])> {
        let g = sample_gradient(&sc.path(th, &sc.trace(seed)?)?, &cc)?;
        Ok((seed, g.l, g.dl()))
    };
    let mut done = Vec::with_capacity(seeds.len());
    let mut pending: Vec<u64> = seeds.to_vec();
    let mut failures = 0;
    while !pending.is_empty() {
        let results: Vec<_> = pending.par_iter().map(|&s| run(s)).collect();
        pending.clear();
        for r in results {
            match r {
                Ok(v) => done.push(v),
                Err(e) if is_recoverable(&e) => {
                    failures += 1;
                    log::warn!("dropping path: {e}");
                    if failures > retry_budget {
                        return Err(Error::RetryBudgetExceeded {
                            failures,
                            budget: retry_budget,
                            last: e.to_string(),
                        });
                    }
                    pending.push(resample.next_seed());
                }
                Err(e) => return Err(e),
            }
        }
    }
    let ls: Vec<f64> = done.iter().map(|d| d.1).collect();
    let (g1, se1) = mean_se(&done.iter().map(|d| d.2[0]).collect::<Vec<_>>());
    let (g2, se2) = mean_se(&done.iter().map(|d| d.2[1]).collect::<Vec<_>>());
    Ok(GradientEstimate {
        l_mean: ls.iter().sum::<f64>() / ls.len() as f64,
        mean: [g1, g2],
        se: [se1, se2],
        seeds: done.iter().map(|d| d.0).collect(),
        dropped: failures,
    })
}

/// One optimizer iteration, evaluated at `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub theta1: f64,
    pub theta2: f64,
    #[serde(rename = "L_mean")]
    pub l_mean: f64,
    #[serde(rename = "dL1")]
    pub dl1: f64,
    #[serde(rename = "dL2")]
    pub dl2: f64,
    pub se1: f64,
    pub se2: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Projected gradient norm at the iterate.
    pub pg_norm: f64,
    /// Step actually taken; zero on the final row.
    pub step: [f64; 2],
    /// Bound hit by the projection per component.
    pub projected: [bool; 2],
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptOutcome {
    pub theta_star: [f64; 2],
    pub converged: bool,
    pub rows: Vec<TraceRow>,
    pub steps: Vec<StepInfo>,
}

impl OptOutcome {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }
}

/// Runs projected gradient descent from `th`. Seeds derive from `master_seed`.
pub fn optimize(
    sc: &Scenario,
    th: &Thresholds,
    opt: &OptConfig,
    master_seed: u64,
) -> Result<OptOutcome> {
    optimize_with(sc, th, opt, master_seed, |_, _| {})
}

/// Like [`optimize`], calling `on_row` after every iteration.
pub fn optimize_with<F>(
    sc: &Scenario,
    th: &Thresholds,
    opt: &OptConfig,
    master_seed: u64,
    mut on_row: F,
) -> Result<OptOutcome>
where
    F: FnMut(&TraceRow, &StepInfo),
{
    opt.validate()?;
    sc.validate(th)?;
    let mut seeds = SeedStream::new(master_seed);
    let pool = seeds.take(opt.batch_size);
    let mut resample = SeedStream::new(master_seed ^ 0x9e37_79b9_7f4a_7c15);
    let (lo, hi) = (th.lower_bounds(), th.upper_bounds());

    let mut theta = th.theta();
    let mut rows = Vec::new();
    let mut steps = Vec::new();
    let mut converged = false;
    for l in 0..opt.max_iters {
        let current = th.with_theta(theta);
        for i in 0..2 {
            if !(lo[i] <= theta[i] && theta[i] <= hi[i]) {
                return Err(Error::Logic(format!(
                    "iterate {l} left the box: theta{} = {}",
                    i + 1,
                    theta[i]
                )));
            }
        }
        let batch = match opt.seed_policy {
            SeedPolicy::Fresh if l > 0 => seeds.take(opt.batch_size),
            _ => pool.clone(),
        };
        let est = estimate_gradient(sc, &current, &batch, opt.retry_budget, &mut resample)?;
        let g = est.mean;
        let rho = opt.schedule.step(opt.rho0, l);
        let pg_norm = projected_gradient_norm(theta, g, th);
        let row = TraceRow {
            iter: l,
            theta1: theta[0],
            theta2: theta[1],
            l_mean: est.l_mean,
            dl1: g[0],
            dl2: g[1],
            se1: est.se[0],
            se2: est.se[1],
            rho,
        };
        let mut info = StepInfo {
            pg_norm,
            step: [0.0; 2],
            projected: [false; 2],
            dropped: est.dropped,
        };
        if pg_norm <= opt.grad_tol {
            converged = true;
        } else {
            let raw = [theta[0] - rho * g[0], theta[1] - rho * g[1]];
            let next = project(raw, th);
            for i in 0..2 {
                info.step[i] = next[i] - theta[i];
                info.projected[i] = next[i] != raw[i];
            }
            theta = next;
        }
        log::debug!(
            "iter {l}: theta ({:.6}, {:.6}) L {:.6} dL ({:+.3e}, {:+.3e}) |pg| {:.3e}",
            row.theta1,
            row.theta2,
            row.l_mean,
            g[0],
            g[1],
            pg_norm
        );
        on_row(&row, &info);
        rows.push(row);
        steps.push(info);
        if converged {
            break;
        }
    }
    Ok(OptOutcome {
        theta_star: theta,
        converged,
        rows,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Constant.step(2.0, 5), 2.0);
        assert_eq!(Schedule::InvL.step(2.0, 3), 0.5);
        assert_eq!(Schedule::InvSqrtL.step(2.0, 3), 1.0);
    }

    #[test]
    fn projection_clamps_into_box() {
        let th = Thresholds::default();
        let p = project([-1.0, 100.0], &th);
        assert_eq!(p, [th.theta1_min, th.theta2_max]);
        assert_eq!(project([4.5, 9.0], &th), [4.5, 9.0]);
    }

    #[test]
    fn pinned_components_do_not_count() {
        let th = Thresholds::default();
        // at theta1_max with a gradient asking to go higher: pinned
        let n = projected_gradient_norm([th.theta1_max, 10.0], [-1.0, 0.0], &th);
        assert_eq!(n, 0.0);
        // same bound, inward gradient: counts
        let n = projected_gradient_norm([th.theta1_max, 10.0], [1.0, 0.0], &th);
        assert_eq!(n, th.theta1_max);
    }

    #[test]
    fn config_validation_names_field() {
        let bad = OptConfig {
            batch_size: 0,
            ..OptConfig::default()
        };
        match bad.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "optimizer.batch_size"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let sc = Scenario::deterministic();
        let err = estimate_gradient(&sc, &Thresholds::default(), &[], 0, &mut SeedStream::new(0))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument { name: "seeds", .. }));
    }
}
