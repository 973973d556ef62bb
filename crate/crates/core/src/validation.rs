//! Independent correctness oracles for the IPA gradient.
//!
//! The finite-difference oracles only call [`Scenario::path`] and
//! [`sample_cost`] on perturbed thresholds under common random numbers.
//! Perturbed probes are accepted when they stay on the same smooth piece of
//! the sample function: same event count and every event in the same noise
//! cell as on the base path. Otherwise the step is shrunk and retried.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{sample_cost, sample_gradient, CostConfig};
use crate::error::{Error, Result};
use crate::ipa::{closed_form_factors, propagate_derivatives};
use crate::model::{androgen_closed_form, EventKind, Thresholds};
use crate::noise::NoiseTrace;
use crate::scenario::{is_recoverable, Scenario};
use crate::sim::SamplePath;

/// Relative errors are measured against `max(|reference|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSettings {
    /// Initial step as a fraction of `theta_i`.
    pub rel_delta: f64,
    /// Step multiplier after a piece mismatch.
    pub shrink: f64,
    pub max_retries: usize,
    /// Pass threshold on the relative error.
    pub tolerance: f64,
}

impl Default for FdSettings {
    fn default() -> Self {
        Self {
            rel_delta: 1e-4,
            shrink: 0.1,
            max_retries: 3,
            tolerance: 1e-2,
        }
    }
}

impl FdSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Validation {
                field: field.into(),
                message,
            })
        };
        if !(self.rel_delta > 0.0 && self.rel_delta < 0.5) {
            return bad(
                "validation.fd.rel_delta",
                format!("must lie in (0, 0.5), got {}", self.rel_delta),
            );
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad(
                "validation.fd.shrink",
                format!("must lie in (0, 1), got {}", self.shrink),
            );
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return bad(
                "validation.fd.tolerance",
                format!("must be > 0, got {}", self.tolerance),
            );
        }
        Ok(())
    }
}

/// Why a probe pair was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mismatch {
    EventCount,
    NoiseCell,
}

/// Central difference of a vector of path functionals along one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdProbe {
    pub delta: f64,
    pub values: Vec<f64>,
    pub k_t_plus: usize,
    pub k_t_minus: usize,
    pub k_t_match: bool,
    pub piece_match: bool,
    pub retries: usize,
    pub last_mismatch: Option<Mismatch>,
}

fn event_cells(path: &SamplePath, noise: &NoiseTrace) -> Vec<usize> {
    path.events
        .iter()
        .map(|e| noise.cell_index(e.tau))
        .collect()
}

fn mismatch(
    base: &SamplePath,
    probe: &SamplePath,
    base_cells: &[usize],
    noise: &NoiseTrace,
) -> Option<Mismatch> {
    if probe.k_t() != base.k_t() {
        Some(Mismatch::EventCount)
    } else if event_cells(probe, noise) != base_cells {
        Some(Mismatch::NoiseCell)
    } else {
        None
    }
}

/// Central CRN difference of `f` along `theta_i`, shrinking the step until
/// both probes land on the base path's piece or the retry budget runs out.
pub fn central_difference<F>(
    sc: &Scenario,
    th: &Thresholds,
    noise: &NoiseTrace,
    base: &SamplePath,
    i: usize,
    fd: &FdSettings,
    f: F,
) -> Result<FdProbe>
where
    F: Fn(&SamplePath) -> Result<Vec<f64>> + Sync,
{
    fd.validate()?;
    let theta = th.theta();
    let (lo, hi) = (th.lower_bounds(), th.upper_bounds());
    let base_cells = event_cells(base, noise);
    let mut delta = fd.rel_delta * theta[i];
    let mut retries = 0;
    let mut last_mismatch = None;
    loop {
        let (mut tp, mut tm) = (theta, theta);
        tp[i] += delta;
        tm[i] -= delta;
        if tp[i] > hi[i] || tm[i] < lo[i] {
            return Err(Error::InvalidArgument {
                name: "theta",
                reason: format!(
                    "probe theta{} +/- {delta} leaves the box [{}, {}]",
                    i + 1,
                    lo[i],
                    hi[i]
                ),
            });
        }
        let (plus, minus) = rayon::join(
            || sc.path(&th.with_theta(tp), noise),
            || sc.path(&th.with_theta(tm), noise),
        );
        let (plus, minus) = (plus?, minus?);
        let why = mismatch(base, &plus, &base_cells, noise)
            .or_else(|| mismatch(base, &minus, &base_cells, noise));
        if why.is_none() || retries == fd.max_retries {
            let (fp, fm) = (f(&plus)?, f(&minus)?);
            let values = fp
                .iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * delta))
                .collect();
            let k_t_match = plus.k_t() == base.k_t() && minus.k_t() == base.k_t();
            return Ok(FdProbe {
                delta,
                values,
                k_t_plus: plus.k_t(),
                k_t_minus: minus.k_t(),
                k_t_match,
                piece_match: why.is_none(),
                retries,
                last_mismatch: why.or(last_mismatch),
            });
        }
        last_mismatch = why;
        retries += 1;
        delta *= fd.shrink;
    }
}

/// FD gradient of the sample cost under common random numbers.
pub fn fd_gradient(
    sc: &Scenario,
    th: &Thresholds,
    noise: &NoiseTrace,
    fd: &FdSettings,
) -> Result<[FdProbe; 2]> {
    let base = sc.path(th, noise)?;
    fd_gradient_from(sc, th, noise, &base, fd)
}

fn fd_gradient_from(
    sc: &Scenario,
    th: &Thresholds,
    noise: &NoiseTrace,
    base: &SamplePath,
    fd: &FdSettings,
) -> Result<[FdProbe; 2]> {
    let cc = sc.cost_config();
    let cost = |p: &SamplePath| sample_cost(p, &cc).map(|l| vec![l]);
    let (a, b) = rayon::join(
        || central_difference(sc, th, noise, base, 0, fd, cost),
        || central_difference(sc, th, noise, base, 1, fd, cost),
    );
    Ok([a?, b?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub theta: [f64; 2],
    pub seed: u64,
    #[serde(rename = "K_T")]
    pub k_t: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub delta: [f64; 2],
    #[serde(rename = "dL_ipa")]
    pub dl_ipa: [f64; 2],
    #[serde(rename = "dL_fd")]
    pub dl_fd: [f64; 2],
    /// `None` when the probes changed the event count.
    pub rel_error: [Option<f64>; 2],
    #[serde(rename = "K_T_match")]
    pub k_t_match: [bool; 2],
    pub piece_match: [bool; 2],
    pub retries: [usize; 2],
    pub retry_reason: [Option<Mismatch>; 2],
    pub tolerance: f64,
    pub pass: bool,
}

/// IPA against CRN finite differences on one noise realization.
pub fn fd_report(
    sc: &Scenario,
    th: &Thresholds,
    noise: &NoiseTrace,
    fd: &FdSettings,
) -> Result<FdReport> {
    let base = sc.path(th, noise)?;
    let g = sample_gradient(&base, &sc.cost_config())?;
    let probes = fd_gradient_from(sc, th, noise, &base, fd)?;
    let ipa = g.dl();
    let rel = |i: usize| {
        let p = &probes[i];
        p.k_t_match.then(|| relative_error(ipa[i], p.values[0]))
    };
    let rel_error = [rel(0), rel(1)];
    let pass = rel_error
        .iter()
        .all(|r| r.is_some_and(|r| r <= fd.tolerance));
    Ok(FdReport {
        theta: th.theta(),
        seed: noise.seed(),
        k_t: base.k_t(),
        l: g.l,
        delta: [probes[0].delta, probes[1].delta],
        dl_ipa: ipa,
        dl_fd: [probes[0].values[0], probes[1].values[0]],
        rel_error,
        k_t_match: [probes[0].k_t_match, probes[1].k_t_match],
        piece_match: [probes[0].piece_match, probes[1].piece_match],
        retries: [probes[0].retries, probes[1].retries],
        retry_reason: [probes[0].last_mismatch, probes[1].last_mismatch],
        tolerance: fd.tolerance,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventTimeCheck {
    pub k: usize,
    pub kind: EventKind,
    pub tau: f64,
    pub ipa: [f64; 2],
    /// `None` when the probes changed the event count.
    pub fd: [Option<f64>; 2],
    pub rel_error: [Option<f64>; 2],
}

/// Event-time derivatives against CRN finite differences of the event times.
pub fn event_time_fd(
    sc: &Scenario,
    th: &Thresholds,
    noise: &NoiseTrace,
    fd: &FdSettings,
) -> Result<Vec<EventTimeCheck>> {
    let base = sc.path(th, noise)?;
    let times = |p: &SamplePath| Ok(p.event_times());
    let (a, b) = rayon::join(
        || central_difference(sc, th, noise, &base, 0, fd, times),
        || central_difference(sc, th, noise, &base, 1, fd, times),
    );
    let probes = [a?, b?];
    Ok(base
        .events
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let fdv = |i: usize| probes[i].k_t_match.then(|| probes[i].values[j]);
            let fd = [fdv(0), fdv(1)];
            let rel = |i: usize| fd[i].map(|v| relative_error(e.tau_prime[i], v));
            EventTimeCheck {
                k: e.k,
                kind: e.kind,
                tau: e.tau,
                ipa: e.tau_prime,
                fd,
                rel_error: [rel(0), rel(1)],
            }
        })
        .collect())
}

/// Per-seed pair of gradient estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub ipa: [f64; 2],
    pub fd: [f64; 2],
    pub diff: [f64; 2],
    pub piece_match: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessReport {
    pub theta: [f64; 2],
    pub n_paths: usize,
    pub dropped: usize,
    pub ipa_mean: [f64; 2],
    pub ipa_se: [f64; 2],
    pub fd_mean: [f64; 2],
    pub fd_se: [f64; 2],
    /// `sqrt(se_ipa^2 + se_fd^2)`.
    pub pooled_se: [f64; 2],
    pub mean_diff: [f64; 2],
    pub pass: [bool; 2],
    pub per_seed: Vec<SeedComparison>,
}

impl UnbiasednessReport {
    pub fn passed(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }
}

/// Minimum number of paths for the 2-SE comparison.
pub const MIN_PATHS: usize = 30;
/// Relative tolerance used instead of the SE rule when the variance is zero.
pub const DEGENERATE_REL_TOL: f64 = 1e-3;

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean IPA gradient against mean CRN-FD gradient over the same seeds.
///
/// Paths hitting a tangential crossing or runaway chatter are dropped and
/// counted. The comparison needs at least [`MIN_PATHS`] usable paths.
pub fn unbiasedness_check(
    sc: &Scenario,
    th: &Thresholds,
    seeds: &[u64],
    fd: &FdSettings,
) -> Result<UnbiasednessReport> {
    if seeds.len() < MIN_PATHS {
        return Err(Error::InvalidArgument {
            name: "n_paths",
            reason: format!("need at least {MIN_PATHS} paths, got {}", seeds.len()),
        });
    }
    let cc: CostConfig = sc.cost_config();
    let results: Vec<Result<Option<SeedComparison>>> = seeds
        .par_iter()
        .map(|&seed| {
            let noise = sc.trace(seed)?;
            let base = match sc.path(th, &noise) {
                Ok(p) => p,
                Err(e) if is_recoverable(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            let ipa = sample_gradient(&base, &cc)?.dl();
            let probes = match fd_gradient_from(sc, th, &noise, &base, fd) {
                Ok(p) => p,
                Err(e) if is_recoverable(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            let fdv = [probes[0].values[0], probes[1].values[0]];
            Ok(Some(SeedComparison {
                seed,
                ipa,
                fd: fdv,
                diff: [ipa[0] - fdv[0], ipa[1] - fdv[1]],
                piece_match: [probes[0].piece_match, probes[1].piece_match],
            }))
        })
        .collect();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for r in results {
        if let Some(c) = r? {
            per_seed.push(c);
        }
    }
    let dropped = seeds.len() - per_seed.len();
    if per_seed.len() < MIN_PATHS {
        return Err(Error::InvalidArgument {
            name: "n_paths",
            reason: format!(
                "only {} usable paths after dropping {dropped}, need {MIN_PATHS}",
                per_seed.len()
            ),
        });
    }

    let mut report = UnbiasednessReport {
        theta: th.theta(),
        n_paths: per_seed.len(),
        dropped,
        ipa_mean: [0.0; 2],
        ipa_se: [0.0; 2],
        fd_mean: [0.0; 2],
        fd_se: [0.0; 2],
        pooled_se: [0.0; 2],
        mean_diff: [0.0; 2],
        pass: [false; 2],
        per_seed,
    };
    for i in 0..2 {
        let ipa: Vec<f64> = report.per_seed.iter().map(|c| c.ipa[i]).collect();
        let fdv: Vec<f64> = report.per_seed.iter().map(|c| c.fd[i]).collect();
        let (im, ise) = mean_se(&ipa);
        let (fm, fse) = mean_se(&fdv);
        let pooled = (ise * ise + fse * fse).sqrt();
        let diff = im - fm;
        report.ipa_mean[i] = im;
        report.ipa_se[i] = ise;
        report.fd_mean[i] = fm;
        report.fd_se[i] = fse;
        report.pooled_se[i] = pooled;
        report.mean_diff[i] = diff;
        let bound = 2.0 * pooled;
        report.pass[i] = if bound > DEGENERATE_REL_TOL * fm.abs().max(REL_FLOOR) {
            diff.abs() <= bound
        } else {
            relative_error(im, fm) <= DEGENERATE_REL_TOL
        };
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorGap {
    pub interval: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Worst relative gap over the three state derivatives and two thresholds.
    pub rel_gap: f64,
}

/// Variational propagation against closed-form factor reconstruction on
/// every interval, both started from the co-integrated value at `tau_k+`.
pub fn factor_check(
    sc: &Scenario,
    path: &SamplePath,
    noise: &NoiseTrace,
) -> Result<Vec<FactorGap>> {
    path.intervals
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            let s = path.interval_samples(iv);
            let start = s[0].ipa;
            let a = propagate_derivatives(s, start, &sc.model, noise)?;
            let b = closed_form_factors(path, iv, &start, &sc.model).reconstruct(&start);
            let mut gap = 0.0f64;
            for n in 0..3 {
                for i in 0..2 {
                    let (u, v) = (a.xprime[n][i], b.xprime[n][i]);
                    let scale = u.abs().max(v.abs()).max(REL_FLOOR);
                    gap = gap.max((u - v).abs() / scale);
                }
            }
            Ok(FactorGap {
                interval: j,
                t_start: iv.t_start,
                t_end: iv.t_end,
                rel_gap: gap,
            })
        })
        .collect()
}

/// Largest absolute gap between the integrated androgen level and its
/// closed form on every interval of the path.
pub fn androgen_check(sc: &Scenario, path: &SamplePath) -> Result<f64> {
    let mut worst = 0.0f64;
    for iv in &path.intervals {
        for s in path.interval_samples(iv) {
            let exact = androgen_closed_form(
                iv.mode,
                iv.x3_anchor,
                s.state.t - iv.t_start,
                &sc.model,
                s.zeta3_tilde,
            )?;
            worst = worst.max((s.state.x3 - exact).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    /// Largest event-time change between consecutive refinements.
    pub event_time_change: Vec<f64>,
    pub cost: Vec<f64>,
    /// `log2` of the ratio of consecutive event-time changes.
    pub observed_order: Option<f64>,
}

/// Re-simulates with `dt`, `dt/2`, `dt/4`, ... and tracks how event times
/// and the cost settle.
pub fn convergence_check(
    sc: &Scenario,
    th: &Thresholds,
    noise: &NoiseTrace,
    refinements: usize,
) -> Result<ConvergenceReport> {
    if refinements < 2 {
        return Err(Error::InvalidArgument {
            name: "refinements",
            reason: format!("need at least 2, got {refinements}"),
        });
    }
    let dts: Vec<f64> = (0..refinements)
        .map(|r| sc.sim.dt / 2f64.powi(r as i32))
        .collect();
    let paths: Vec<SamplePath> = dts
        .par_iter()
        .map(|&dt| {
            let mut s = *sc;
            s.sim.dt = dt;
            s.sim.event_tol = s.sim.event_tol.min(dt * 1e-3);
            s.path(th, noise)
        })
        .collect::<Result<_>>()?;
    let cc = sc.cost_config();
    let cost = paths
        .iter()
        .map(|p| sample_cost(p, &cc))
        .collect::<Result<Vec<_>>>()?;
    let mut change = Vec::new();
    for w in paths.windows(2) {
        if w[0].k_t() != w[1].k_t() {
            return Err(Error::Logic(format!(
                "event count changed under refinement: {} vs {}",
                w[0].k_t(),
                w[1].k_t()
            )));
        }
        let d = w[0]
            .events
            .iter()
            .zip(&w[1].events)
            .map(|(a, b)| (a.tau - b.tau).abs())
            .fold(0.0, f64::max);
        change.push(d);
    }
    let observed_order = (change.len() >= 2 && change[change.len() - 1] > 0.0)
        .then(|| (change[change.len() - 2] / change[change.len() - 1]).log2());
    Ok(ConvergenceReport {
        dts,
        event_time_change: change,
        cost,
        observed_order,
    })
}
