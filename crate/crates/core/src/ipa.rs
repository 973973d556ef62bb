//! Infinitesimal perturbation analysis of the threshold policy.
//!
//! State derivatives `x'_{n,i} = dx_n/dtheta_i` obey the variational
//! equation `d/dt x' = (df/dx) x'` inside every inter-event interval (the
//! dynamics do not depend on `theta` directly) and jump at each event by
//! `[f_pre - f_post] * tau'`. Event-time derivatives come from the implicit
//! function theorem applied to the guard `x1 + x2 - theta_p = 0`.
//!
//! The simulator co-integrates these derivatives on its own RK4 mesh. The
//! functions here are the pieces it uses, plus two independent routes over
//! recorded samples ([`propagate_derivatives`] and [`closed_form_factors`])
//! that the test suite checks against each other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    androgen_closed_form_unchecked, drift_unchecked, jacobian, EventKind, HybridState, Jacobian,
    Mode, ModelParams,
};
use crate::noise::NoiseTrace;
use crate::quadrature::cumulative_piecewise;
use crate::sim::{Interval, Sample, SamplePath};

/// Smallest admissible `|f^{x1} + f^{x2}|` at an event.
pub const TRANSVERSALITY_FLOOR: f64 = 1e-8;

/// `xprime[n][i] = dx_{n+1}/dtheta_{i+1}`, `zprime[j][i] = dz_{j+1}/dtheta_{i+1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IpaState {
    pub xprime: [[f64; 2]; 3],
    pub zprime: [[f64; 2]; 2],
}

impl IpaState {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `x1' + x2'` for parameter `i`, the sensitivity of PSA.
    pub fn psa_prime(&self, i: usize) -> f64 {
        self.xprime[0][i] + self.xprime[1][i]
    }

    pub fn is_finite(&self) -> bool {
        self.xprime.iter().flatten().all(|v| v.is_finite())
            && self.zprime.iter().flatten().all(|v| v.is_finite())
    }

    pub(crate) fn axpy(&self, a: f64, rate: &IpaState) -> IpaState {
        let mut out = *self;
        for n in 0..3 {
            for i in 0..2 {
                out.xprime[n][i] += a * rate.xprime[n][i];
            }
        }
        out
    }
}

/// Right-hand side of the variational equation. Clock derivatives are
/// constant between events.
#[inline]
pub fn variational_rate(j: &Jacobian, d: &IpaState) -> IpaState {
    let x = &d.xprime;
    let mut rate = IpaState::zero();
    for i in 0..2 {
        rate.xprime[0][i] = j.j11 * x[0][i] + j.j13 * x[2][i];
        rate.xprime[1][i] = j.j21 * x[0][i] + j.j22 * x[1][i] + j.j23 * x[2][i];
        rate.xprime[2][i] = j.j33 * x[2][i];
    }
    rate
}

/// Event-time derivative `tau'_i = (1[p = i] - x1'(tau-) - x2'(tau-)) / (f^{x1} + f^{x2})`.
///
/// `guard_rate` is `f^{x1} + f^{x2}` at `tau-`, noise included.
pub fn event_time_derivative(
    kind: EventKind,
    ipa_pre: &IpaState,
    guard_rate: f64,
) -> Result<[f64; 2]> {
    if guard_rate.is_nan() || guard_rate.abs() < TRANSVERSALITY_FLOOR {
        return Err(Error::TangentialCrossing {
            t: f64::NAN,
            guard_drift: guard_rate,
            floor: TRANSVERSALITY_FLOOR,
        });
    }
    let p = kind.theta_index();
    let mut out = [0.0; 2];
    for (i, o) in out.iter_mut().enumerate() {
        let indicator = if i == p { 1.0 } else { 0.0 };
        *o = (indicator - ipa_pre.psa_prime(i)) / guard_rate;
    }
    Ok(out)
}

/// Drift mismatches `(f^{x1}_pre - f^{x1}_post, f^{x2}_pre - f^{x2}_post)` at an event.
///
/// `h_pre` is the closed-form androgen level at `tau-` over the interval that
/// just ended; `x3_at_tau` is the androgen level the new interval starts from.
/// The cell dynamics only see the mode through `x3`, so both terms vanish
/// when the two agree.
pub fn drift_jump(state: &HybridState, h_pre: f64, p: &ModelParams) -> (f64, f64) {
    let (x1, x2, x3) = (state.x1, state.x2, state.x3);
    let df1 = (p.alpha1 * p.proliferation_sigmoid(h_pre)
        - p.alpha1 * p.proliferation_sigmoid(x3)
        - p.beta1 * p.apoptosis_sigmoid(h_pre)
        + p.beta1 * p.apoptosis_sigmoid(x3)
        + p.m1 / p.x30 * (h_pre - x3))
        * x1;
    let df2 = p.alpha2 * p.d / p.x30 * (x3 - h_pre) * x2 - p.m1 / p.x30 * (h_pre - x3) * x1;
    (df1, df2)
}

/// Boundary condition at an event: state-derivative jumps and clock resets.
pub fn apply_event_jump(
    kind: EventKind,
    ipa_pre: &IpaState,
    tau_prime: [f64; 2],
    state: &HybridState,
    h_pre: f64,
    p: &ModelParams,
) -> IpaState {
    let (df1, df2) = drift_jump(state, h_pre, p);
    // f^{x3}_pre - f^{x3}_post: the androgen source x30/sigma switches on at
    // e1 and off at e2.
    let df3 = match kind {
        EventKind::E1 => -p.x30 / p.sigma,
        EventKind::E2 => p.x30 / p.sigma,
    };
    let mut out = *ipa_pre;
    for i in 0..2 {
        out.xprime[0][i] += df1 * tau_prime[i];
        out.xprime[1][i] += df2 * tau_prime[i];
        out.xprime[2][i] += df3 * tau_prime[i];
        match kind {
            EventKind::E1 => {
                out.zprime[0][i] = 0.0;
                out.zprime[1][i] = -tau_prime[i];
            }
            EventKind::E2 => {
                out.zprime[0][i] = -tau_prime[i];
                out.zprime[1][i] = 0.0;
            }
        }
    }
    out
}

/// Integrates the variational equation over recorded interval samples,
/// starting from `start` at the first sample.
///
/// Classical RK4 on the sample mesh. Mid-step states come from the cubic
/// Hermite interpolant of the recorded states and drifts, which keeps the
/// scheme fourth order without access to the simulator's stage values.
pub fn propagate_derivatives(
    samples: &[Sample],
    start: IpaState,
    p: &ModelParams,
    noise: &NoiseTrace,
) -> Result<IpaState> {
    let Some(first) = samples.first() else {
        return Ok(start);
    };
    let mode = first.state.q;
    if samples.iter().any(|s| s.state.q != mode) {
        return Err(Error::Logic(
            "mode changes inside an inter-event interval".into(),
        ));
    }
    let mut d = start;
    for w in samples.windows(2) {
        let (a, b) = (&w[0].state, &w[1].state);
        let h = b.t - a.t;
        if h <= 0.0 {
            continue;
        }
        let zeta = noise.at(a.t + 0.5 * h);
        let fa = drift_unchecked(a, p, zeta);
        let fb = drift_unchecked(b, p, zeta);
        let mid = |ya: f64, yb: f64, da: f64, db: f64| 0.5 * (ya + yb) + h * (da - db) / 8.0;
        let ja = jacobian(a.x1, a.x2, a.x3, p);
        let jm = jacobian(
            mid(a.x1, b.x1, fa.dx1, fb.dx1),
            mid(a.x2, b.x2, fa.dx2, fb.dx2),
            mid(a.x3, b.x3, fa.dx3, fb.dx3),
            p,
        );
        let jb = jacobian(b.x1, b.x2, b.x3, p);
        let k1 = variational_rate(&ja, &d);
        let k2 = variational_rate(&jm, &d.axpy(0.5 * h, &k1));
        let k3 = variational_rate(&jm, &d.axpy(0.5 * h, &k2));
        let k4 = variational_rate(&jb, &d.axpy(h, &k3));
        for n in 0..3 {
            for i in 0..2 {
                d.xprime[n][i] += h / 6.0
                    * (k1.xprime[n][i]
                        + 2.0 * k2.xprime[n][i]
                        + 2.0 * k3.xprime[n][i]
                        + k4.xprime[n][i]);
            }
        }
    }
    Ok(d)
}

/// Interval factors of the closed-form IPA solution.
///
/// For an `ON` interval these are `A`, `B1`, `B2` (`C`, `D1`, `D2` when
/// `OFF`) so that, with `x3'` frozen at zero,
/// `x1'(tau_{k+1}-) = x1'(tau_k+) e^A` and
/// `x2'(tau_{k+1}-) = x2'(tau_k+) e^{B1} + B2`.
/// Once an event has perturbed the androgen level, `x3'` is nonzero and
/// drives `x1'` and `x2'` through `df/dx3`; `a3` and `b3` carry that forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalFactors {
    pub mode: Mode,
    /// `A` (ON) or `C` (OFF): integral of `df^{x1}/dx1`.
    pub a: f64,
    /// `B1` (ON) or `D1` (OFF): integral of `df^{x2}/dx2`.
    pub b1: f64,
    /// `B2` (ON) or `D2` (OFF), per parameter: contribution of `x1'` to `x2'`.
    pub b2: [f64; 2],
    /// Contribution of `x3'` to `x1'`, per parameter.
    pub a3: [f64; 2],
    /// Direct contribution of `x3'` to `x2'`, per parameter.
    pub b3: [f64; 2],
    /// `exp(-(tau_{k+1} - tau_k) / sigma)`, the decay of `x3'`.
    pub androgen_decay: f64,
}

impl IntervalFactors {
    /// State derivatives at the end of the interval.
    pub fn reconstruct(&self, start: &IpaState) -> IpaState {
        let mut out = *start;
        for i in 0..2 {
            out.xprime[0][i] = start.xprime[0][i] * self.a.exp() + self.a3[i];
            out.xprime[1][i] = start.xprime[1][i] * self.b1.exp() + self.b2[i] + self.b3[i];
            out.xprime[2][i] = start.xprime[2][i] * self.androgen_decay;
        }
        out
    }
}

/// Computes the interval factors of `interval` by quadrature of the
/// closed-form androgen profile over the recorded samples.
///
/// Uses only the sample mesh, the recorded cell populations, the
/// accumulated noise integral and the derivatives at the interval start.
/// Intervals with fewer than three samples degrade to the trapezoid rule.
pub fn closed_form_factors(
    path: &SamplePath,
    interval: &Interval,
    start: &IpaState,
    p: &ModelParams,
) -> IntervalFactors {
    let samples = path.interval_samples(interval);
    let n = samples.len();
    let t0 = interval.t_start;
    let t: Vec<f64> = samples.iter().map(|s| s.state.t).collect();
    let knot: Vec<bool> = samples.iter().map(|s| s.knot).collect();
    let h: Vec<f64> = samples
        .iter()
        .map(|s| {
            androgen_closed_form_unchecked(
                interval.mode,
                interval.x3_anchor,
                s.state.t - t0,
                p,
                s.zeta3_tilde,
            )
        })
        .collect();

    // df^{x1}/dx1 along the androgen profile.
    let a_rate: Vec<f64> = h
        .iter()
        .map(|&h| {
            p.alpha1 * p.proliferation_sigmoid(h) - p.beta1 * p.apoptosis_sigmoid(h)
                + p.m1 / p.x30 * h
                - (p.m1 + p.lambda1)
        })
        .collect();
    // df^{x2}/dx2.
    let b_rate: Vec<f64> = h
        .iter()
        .map(|&h| p.alpha2 * (1.0 - p.d * h / p.x30) - p.beta2)
        .collect();
    // df^{x2}/dx1.
    let coupling: Vec<f64> = h.iter().map(|&h| p.m1 * (1.0 - h / p.x30)).collect();
    // df^{x1}/dx3 and df^{x2}/dx3.
    let c1: Vec<f64> = h
        .iter()
        .zip(samples)
        .map(|(&h, s)| {
            let sa = p.proliferation_sigmoid(h);
            let sb = p.apoptosis_sigmoid(h);
            (p.alpha1 * p.k2 * sa * (1.0 - sa) - p.beta1 * p.k4 * sb * (1.0 - sb) + p.m1 / p.x30)
                * s.state.x1
        })
        .collect();
    let c2: Vec<f64> = h
        .iter()
        .zip(samples)
        .map(|(_, s)| -(p.alpha2 * p.d * s.state.x2 + p.m1 * s.state.x1) / p.x30)
        .collect();

    let a_cum = cumulative_piecewise(&t, &a_rate, &knot);
    let b_cum = cumulative_piecewise(&t, &b_rate, &knot);
    let a_total = a_cum[n - 1];
    let b_total = b_cum[n - 1];
    let x3_decay: Vec<f64> = t.iter().map(|&ti| (-(ti - t0) / p.sigma).exp()).collect();

    let mut b2 = [0.0; 2];
    let mut a3 = [0.0; 2];
    let mut b3 = [0.0; 2];
    for i in 0..2 {
        let x3p0 = start.xprime[2][i];
        let x1p0 = start.xprime[0][i];
        // x1'(t) = e^{A(t)} [x1'(tau+) + int e^{-A} c1 x3'].
        let forcing: Vec<f64> = (0..n)
            .map(|k| (-a_cum[k]).exp() * c1[k] * x3p0 * x3_decay[k])
            .collect();
        let forcing_cum = cumulative_piecewise(&t, &forcing, &knot);
        let x1p: Vec<f64> = (0..n)
            .map(|k| a_cum[k].exp() * (x1p0 + forcing_cum[k]))
            .collect();
        a3[i] = a_total.exp() * forcing_cum[n - 1];

        let g: Vec<f64> = (0..n)
            .map(|k| (b_total - b_cum[k]).exp() * coupling[k] * x1p[k])
            .collect();
        b2[i] = cumulative_piecewise(&t, &g, &knot)[n - 1];
        let g3: Vec<f64> = (0..n)
            .map(|k| (b_total - b_cum[k]).exp() * c2[k] * x3p0 * x3_decay[k])
            .collect();
        b3[i] = cumulative_piecewise(&t, &g3, &knot)[n - 1];
    }
    IntervalFactors {
        mode: interval.mode,
        a: a_total,
        b1: b_total,
        b2,
        a3,
        b3,
        androgen_decay: (-(interval.t_end - t0) / p.sigma).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseValues;

    fn ipa_with_psa_prime(a: [f64; 2], b: [f64; 2]) -> IpaState {
        IpaState {
            xprime: [a, b, [0.0; 2]],
            zprime: [[0.0; 2]; 2],
        }
    }

    #[test]
    fn tau_prime_examples() {
        let z = IpaState::zero();
        assert_eq!(
            event_time_derivative(EventKind::E1, &z, 2.0).unwrap(),
            [0.5, 0.0]
        );
        let tp = event_time_derivative(EventKind::E2, &z, -4.0).unwrap();
        assert_eq!(tp[0], 0.0);
        assert_eq!(tp[1], -0.25);
        let d = ipa_with_psa_prime([0.25, -1.0], [0.25, 0.5]);
        let tp = event_time_derivative(EventKind::E1, &d, -0.5).unwrap();
        assert_eq!(tp, [(1.0 - 0.5) / -0.5, (0.0 + 0.5) / -0.5]);
    }

    #[test]
    fn tangential_crossing_is_rejected() {
        let err = event_time_derivative(EventKind::E1, &IpaState::zero(), 1e-10);
        assert!(matches!(err, Err(Error::TangentialCrossing { .. })));
        let err = event_time_derivative(EventKind::E1, &IpaState::zero(), f64::NAN);
        assert!(matches!(err, Err(Error::TangentialCrossing { .. })));
    }

    fn at_tau() -> HybridState {
        HybridState {
            t: 10.0,
            q: Mode::On,
            x1: 3.0,
            x2: 1.0,
            x3: 0.6,
            z1: 10.0,
            z2: 0.0,
        }
    }

    #[test]
    fn zero_tau_prime_only_resets_clocks() {
        let p = ModelParams::default();
        let mut pre = ipa_with_psa_prime([0.3, 0.1], [-0.2, 0.4]);
        pre.xprime[2] = [0.7, -0.7];
        pre.zprime = [[1.0, 2.0], [3.0, 4.0]];
        let post = apply_event_jump(EventKind::E1, &pre, [0.0, 0.0], &at_tau(), 0.6, &p);
        assert_eq!(post.xprime, pre.xprime);
        assert_eq!(post.zprime[0], [0.0, 0.0]);
        assert_eq!(post.zprime[1], [-0.0, -0.0]);
        let post = apply_event_jump(EventKind::E2, &pre, [0.0, 0.0], &at_tau(), 0.6, &p);
        assert_eq!(post.zprime[1], [0.0, 0.0]);
    }

    #[test]
    fn androgen_jump_arithmetic() {
        let p = ModelParams {
            x30: 20.0,
            sigma: 4.0,
            ..ModelParams::default()
        };
        let s = at_tau();
        let pre = IpaState::zero();
        let post = apply_event_jump(EventKind::E1, &pre, [0.5, 0.0], &s, s.x3, &p);
        assert!((post.xprime[2][0] - (-2.5)).abs() < 1e-15);
        assert_eq!(post.xprime[2][1], 0.0);
        assert_eq!(post.zprime[1], [-0.5, -0.0]);
        let post = apply_event_jump(EventKind::E2, &pre, [0.5, 0.0], &s, s.x3, &p);
        assert!((post.xprime[2][0] - 2.5).abs() < 1e-15);
        assert_eq!(post.zprime[0], [-0.5, -0.0]);
    }

    #[test]
    fn drift_jump_matches_direct_difference() {
        // Direct route: f_pre(x3 = h_pre) - f_post(x3 = x3(tau)).
        let p = ModelParams::default();
        let z = NoiseValues {
            zeta1: 0.01,
            zeta2: -0.003,
            zeta3: 0.1,
        };
        for (h_pre, x3) in [(0.6, 0.6), (0.6, 0.6000001), (15.0, 14.5)] {
            let s = HybridState { x3, ..at_tau() };
            let pre = drift_unchecked(&HybridState { x3: h_pre, ..s }, &p, z);
            let post = drift_unchecked(&HybridState { q: Mode::Off, ..s }, &p, z);
            let (df1, df2) = drift_jump(&s, h_pre, &p);
            assert!((df1 - (pre.dx1 - post.dx1)).abs() < 1e-10);
            assert!((df2 - (pre.dx2 - post.dx2)).abs() < 1e-10);
        }
        let s = at_tau();
        assert_eq!(drift_jump(&s, s.x3, &p), (0.0, 0.0));
    }

    #[test]
    fn x3_prime_decays_exponentially() {
        let j = Jacobian {
            j11: 0.0,
            j13: 0.0,
            j21: 0.0,
            j22: 0.0,
            j23: 0.0,
            j33: -1.0 / 3.0,
        };
        let mut d = IpaState::zero();
        d.xprime[2] = [1.0, 2.0];
        let r = variational_rate(&j, &d);
        assert_eq!(r.xprime[2], [-1.0 / 3.0, -2.0 / 3.0]);
        assert_eq!(r.zprime, [[0.0; 2]; 2]);
    }
}
