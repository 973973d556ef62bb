//! Sample cost of a therapy path and its IPA gradient.
//!
//! `L = (1/T) [ W1 int_0^T (x1 + x2) / PSA_init dt + W2 int_0^T z1 dt ]`
//! penalizes both the PSA level and the length of on-treatment periods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventKind;
use crate::quadrature::integrate_piecewise;
use crate::sim::SamplePath;

/// Relative slack when comparing the path end against the horizon.
const HORIZON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub w1: f64,
    pub w2: f64,
    /// PSA at the start of the first on-treatment period, `x1(0) + x2(0)`.
    pub psa_init: f64,
    pub horizon: f64,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("cost.w1", self.w1), ("cost.w2", self.w2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation {
                    field: field.into(),
                    message: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !(self.psa_init.is_finite() && self.psa_init > 0.0) {
            return Err(Error::Validation {
                field: "cost.psa_init".into(),
                message: format!("must be > 0, got {}", self.psa_init),
            });
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Validation {
                field: "cost.horizon".into(),
                message: format!("must be > 0, got {}", self.horizon),
            });
        }
        Ok(())
    }
}

/// Per-term breakdown of the sample gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientTerms {
    /// `(W1 / (T PSA_init)) int (x1' + x2') dt`.
    pub psa: [f64; 2],
    /// `(W2 / T) sum_m Delta_m^ON (eta'_m - xi'_m)` over complete on periods.
    pub duration: [f64; 2],
    /// `-(W2 / T) xi'_{M+1} (T - xi_{M+1})` when the path ends on treatment.
    pub incomplete: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "dL_dtheta1")]
    pub dl_dtheta1: f64,
    #[serde(rename = "dL_dtheta2")]
    pub dl_dtheta2: f64,
    pub terms: GradientTerms,
    #[serde(rename = "K_T")]
    pub k_t: usize,
    #[serde(rename = "M_T")]
    pub m_t: usize,
    pub seed: u64,
}

impl GradientReport {
    pub fn dl(&self) -> [f64; 2] {
        [self.dl_dtheta1, self.dl_dtheta2]
    }
}

fn check_coverage(path: &SamplePath, cc: &CostConfig) -> Result<()> {
    let covered = path.final_sample().state.t;
    if covered < cc.horizon * (1.0 - HORIZON_SLACK) {
        return Err(Error::ShortPath {
            covered,
            horizon: cc.horizon,
        });
    }
    Ok(())
}

/// The sample cost, integrated piecewise between events and noise-cell
/// boundaries.
pub fn sample_cost(path: &SamplePath, cc: &CostConfig) -> Result<f64> {
    cc.validate()?;
    check_coverage(path, cc)?;
    let t: Vec<f64> = path.samples.iter().map(|s| s.state.t).collect();
    let knot: Vec<bool> = path.samples.iter().map(|s| s.knot).collect();
    let psa: Vec<f64> = path
        .samples
        .iter()
        .map(|s| s.state.psa() / cc.psa_init)
        .collect();
    let z1: Vec<f64> = path.samples.iter().map(|s| s.state.z1).collect();
    let psa_integral = integrate_piecewise(&t, &psa, &knot);
    let clock_integral = integrate_piecewise(&t, &z1, &knot);
    Ok((cc.w1 * psa_integral + cc.w2 * clock_integral) / cc.horizon)
}

/// Sample cost and its exact derivative with respect to both thresholds.
pub fn sample_gradient(path: &SamplePath, cc: &CostConfig) -> Result<GradientReport> {
    let l = sample_cost(path, cc)?;
    for (k, e) in path.events.iter().enumerate() {
        if !(e.tau_prime.iter().all(|v| v.is_finite()) && e.ipa_post.is_finite()) {
            return Err(Error::MissingIpa(format!("event {}", k + 1)));
        }
    }
    if let Some(j) = path.samples.iter().position(|s| !s.ipa.is_finite()) {
        return Err(Error::MissingIpa(format!("sample {j}")));
    }

    let horizon = cc.horizon;
    let t: Vec<f64> = path.samples.iter().map(|s| s.state.t).collect();
    let knot: Vec<bool> = path.samples.iter().map(|s| s.knot).collect();
    let mut terms = GradientTerms::default();
    for i in 0..2 {
        let psa_prime: Vec<f64> = path.samples.iter().map(|s| s.ipa.psa_prime(i)).collect();
        terms.psa[i] = cc.w1 / (horizon * cc.psa_init) * integrate_piecewise(&t, &psa_prime, &knot);
    }

    // On-treatment period m runs from the (m-1)th e2 (or t = 0) to the mth e1.
    let k_t = path.k_t();
    let m_t = path.m_t();
    let events = &path.events;
    for m in 1..=m_t {
        let end = &events[2 * m - 2];
        debug_assert_eq!(end.kind, EventKind::E1);
        let (xi, xi_prime) = if m == 1 {
            (0.0, [0.0; 2])
        } else {
            let start = &events[2 * m - 3];
            (start.tau, opening_time_derivative(start))
        };
        let duration = end.tau - xi;
        for i in 0..2 {
            terms.duration[i] += cc.w2 / horizon * duration * (end.tau_prime[i] - xi_prime[i]);
        }
    }
    if k_t % 2 == 1 {
        let (xi, xi_prime) = if m_t == 0 {
            (0.0, [0.0; 2])
        } else {
            let start = &events[2 * m_t - 1];
            debug_assert_eq!(start.kind, EventKind::E2);
            (start.tau, opening_time_derivative(start))
        };
        for i in 0..2 {
            terms.incomplete[i] = -cc.w2 / horizon * xi_prime[i] * (horizon - xi);
        }
    }

    let dl = |i: usize| terms.psa[i] + terms.duration[i] + terms.incomplete[i];
    Ok(GradientReport {
        l,
        dl_dtheta1: dl(0),
        dl_dtheta2: dl(1),
        terms,
        k_t,
        m_t,
        seed: path.seed,
    })
}

// Start-time derivative of an on period opened by an e2: the clock
// derivative right after the event is -tau'.
fn opening_time_derivative(e2: &crate::sim::EventRecord) -> [f64; 2] {
    [-e2.ipa_post.zprime[0][0], -e2.ipa_post.zprime[0][1]]
}
