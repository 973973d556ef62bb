//! Event-driven simulation of the hybrid automaton.
//!
//! Fixed-step RK4 on a global mesh `t = n * dt`, refined at noise-cell
//! boundaries, event times and the horizon so that the noise is constant on
//! every step. The IPA state derivatives are advanced with the same RK4
//! stages. A guard sign change inside a step is localized by bisection on
//! the step length, always re-integrating from the step start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipa::{apply_event_jump, event_time_derivative, variational_rate, IpaState};
use crate::model::{
    androgen_closed_form_unchecked, drift_unchecked, guard_value, jacobian, Drift, EventKind,
    HybridState, Mode, ModelParams, NoiseValues, Thresholds,
};
use crate::noise::{NoiseTrace, Zeta3Accumulator};

/// Steps shorter than this (days) are merged into their neighbor.
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Horizon `T` (days).
    pub horizon: f64,
    /// Integrator step (days).
    pub dt: f64,
    /// Width of the final bisection bracket (days).
    pub event_tol: f64,
    pub max_events: usize,
    pub x1_0: f64,
    pub x2_0: f64,
    pub x3_0: f64,
    pub initial_mode: Mode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 900.0,
            dt: 0.05,
            event_tol: 1e-9,
            max_events: 200,
            x1_0: 14.0,
            x2_0: 0.1,
            x3_0: 0.4,
            initial_mode: Mode::On,
        }
    }
}

impl SimConfig {
    pub fn initial_psa(&self) -> f64 {
        self.x1_0 + self.x2_0
    }

    pub fn initial_state(&self) -> HybridState {
        HybridState::initial(self.initial_mode, self.x1_0, self.x2_0, self.x3_0)
    }

    /// Checks the fields that do not depend on the noise grid or thresholds.
    pub fn validate(&self) -> Result<()> {
        let v = |field: &str, message: String| Error::Validation {
            field: field.into(),
            message,
        };
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(v(
                "sim.horizon",
                format!("must be > 0, got {}", self.horizon),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(v("sim.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.dt) {
            return Err(v(
                "sim.event_tol",
                format!(
                    "must satisfy 0 < event_tol < dt, got event_tol = {} and dt = {}",
                    self.event_tol, self.dt
                ),
            ));
        }
        if self.max_events == 0 {
            return Err(v("sim.max_events", "must be >= 1".into()));
        }
        for (field, x) in [
            ("sim.x1_0", self.x1_0),
            ("sim.x2_0", self.x2_0),
            ("sim.x3_0", self.x3_0),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(v(field, format!("must be finite and >= 0, got {x}")));
            }
        }
        if self.initial_mode != Mode::On {
            return Err(v(
                "sim.initial_mode",
                "paths start at the beginning of an on-treatment period".into(),
            ));
        }
        Ok(())
    }

    /// Cross-checks against the noise grid and thresholds.
    pub fn validate_with(&self, grid_dt: f64, th: &Thresholds) -> Result<()> {
        self.validate()?;
        if self.dt > grid_dt {
            return Err(Error::Validation {
                field: "sim.dt".into(),
                message: format!(
                    "integrator step must not exceed the noise grid: sim.dt = {} > noise.grid_dt = {}",
                    self.dt, grid_dt
                ),
            });
        }
        if self.initial_psa() <= th.theta1 {
            return Err(Error::Validation {
                field: "sim.x1_0".into(),
                message: format!(
                    "initial PSA x1_0 + x2_0 = {} must exceed thresholds.theta1 = {}",
                    self.initial_psa(),
                    th.theta1
                ),
            });
        }
        Ok(())
    }
}

/// A dense trajectory point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: HybridState,
    pub ipa: IpaState,
    /// Noise integral accumulated since the current interval's anchor.
    pub zeta3_tilde: f64,
    /// Derivative discontinuity here: event, noise-cell boundary, or an end.
    pub knot: bool,
}

/// One maximal run of constant mode, `[tau_k, tau_{k+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mode: Mode,
    /// Sample index of the `tau_k+` sample.
    pub first: usize,
    /// Sample index of the `tau_{k+1}-` sample (inclusive).
    pub last: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// `x3(tau_k+)`, the anchor of the closed-form androgen profile.
    pub x3_anchor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// 1-based event index along the path.
    pub k: usize,
    pub tau: f64,
    pub kind: EventKind,
    pub state_pre: HybridState,
    pub state_post: HybridState,
    pub ipa_pre: IpaState,
    pub ipa_post: IpaState,
    /// `d tau / d theta_i`.
    pub tau_prime: [f64; 2],
    /// `f^{x1} + f^{x2}` at `tau-`.
    pub guard_rate: f64,
    /// Closed-form androgen level at `tau-`.
    pub h_pre: f64,
    /// Noise in force at `tau`.
    pub zeta: NoiseValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub horizon: f64,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub events: Vec<EventRecord>,
    pub samples: Vec<Sample>,
    pub intervals: Vec<Interval>,
    /// Integrator steps whose end state had to be clamped at zero. The
    /// IPA derivatives ignore the clamp, so they are only exact when this is 0.
    pub clamped_steps: usize,
}

impl SamplePath {
    /// Number of on and off periods, complete or not.
    pub fn k_t(&self) -> usize {
        self.events.len() + 1
    }

    /// Number of complete on-treatment periods.
    pub fn m_t(&self) -> usize {
        self.k_t() / 2
    }

    /// `(xi_k, eta_k)` for every period.
    pub fn periods(&self) -> Vec<(f64, f64)> {
        let mut bounds = Vec::with_capacity(self.k_t());
        let mut start = 0.0;
        for e in &self.events {
            bounds.push((start, e.tau));
            start = e.tau;
        }
        bounds.push((start, self.horizon));
        bounds
    }

    /// `(xi_m, eta_m)` for the on-treatment periods, the last one possibly
    /// cut off by the horizon.
    pub fn on_periods(&self) -> Vec<(f64, f64)> {
        self.periods().into_iter().step_by(2).collect()
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.tau).collect()
    }

    pub fn interval_samples(&self, interval: &Interval) -> &[Sample] {
        &self.samples[interval.first..=interval.last]
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("paths hold at least one sample")
    }

    /// Checks the structural invariants of a completed path.
    pub fn check_invariants(&self) -> Result<()> {
        let breach = |m: String| Err(Error::Logic(m));
        let mut expected = EventKind::E1;
        let mut last_tau = 0.0;
        for e in &self.events {
            if e.kind != expected {
                return breach(format!(
                    "event {} is {} but {} was due",
                    e.k, e.kind, expected
                ));
            }
            if e.tau < last_tau {
                return breach(format!("event {} goes back in time", e.k));
            }
            if e.state_pre.x1 != e.state_post.x1
                || e.state_pre.x2 != e.state_post.x2
                || e.state_pre.x3 != e.state_post.x3
            {
                return breach(format!("cell state jumps at event {}", e.k));
            }
            let (clock, clock_prime) = match e.kind {
                EventKind::E1 => (e.state_post.z1, e.ipa_post.zprime[0]),
                EventKind::E2 => (e.state_post.z2, e.ipa_post.zprime[1]),
            };
            if clock != 0.0 || clock_prime != [0.0, 0.0] {
                return breach(format!("clock not reset at event {}", e.k));
            }
            expected = match e.kind {
                EventKind::E1 => EventKind::E2,
                EventKind::E2 => EventKind::E1,
            };
            last_tau = e.tau;
        }
        Ok(())
    }
}

/// Simulator node: state, IPA derivatives and noise integral.
#[derive(Debug, Clone, Copy)]
struct Node {
    state: HybridState,
    ipa: IpaState,
    acc: Zeta3Accumulator,
}

#[inline]
fn add_scaled(s: &HybridState, a: f64, f: &Drift) -> HybridState {
    HybridState {
        t: s.t + a,
        q: s.q,
        x1: s.x1 + a * f.dx1,
        x2: s.x2 + a * f.dx2,
        x3: s.x3 + a * f.dx3,
        z1: s.z1 + a * f.dz1,
        z2: s.z2 + a * f.dz2,
    }
}

// One RK4 step of length h with constant noise. The state is not clamped.
#[inline]
fn rk4(node: &Node, h: f64, zeta: NoiseValues, p: &ModelParams, with_ipa: bool) -> Node {
    let s = &node.state;
    let k1 = drift_unchecked(s, p, zeta);
    let s2 = add_scaled(s, 0.5 * h, &k1);
    let k2 = drift_unchecked(&s2, p, zeta);
    let s3 = add_scaled(s, 0.5 * h, &k2);
    let k3 = drift_unchecked(&s3, p, zeta);
    let s4 = add_scaled(s, h, &k3);
    let k4 = drift_unchecked(&s4, p, zeta);
    let w = h / 6.0;
    let state = HybridState {
        t: s.t + h,
        q: s.q,
        x1: s.x1 + w * (k1.dx1 + 2.0 * k2.dx1 + 2.0 * k3.dx1 + k4.dx1),
        x2: s.x2 + w * (k1.dx2 + 2.0 * k2.dx2 + 2.0 * k3.dx2 + k4.dx2),
        x3: s.x3 + w * (k1.dx3 + 2.0 * k2.dx3 + 2.0 * k3.dx3 + k4.dx3),
        z1: s.z1 + w * (k1.dz1 + 2.0 * k2.dz1 + 2.0 * k3.dz1 + k4.dz1),
        z2: s.z2 + w * (k1.dz2 + 2.0 * k2.dz2 + 2.0 * k3.dz2 + k4.dz2),
    };
    let ipa = if with_ipa {
        let d = &node.ipa;
        let j1 = jacobian(s.x1, s.x2, s.x3, p);
        let j2 = jacobian(s2.x1, s2.x2, s2.x3, p);
        let j3 = jacobian(s3.x1, s3.x2, s3.x3, p);
        let j4 = jacobian(s4.x1, s4.x2, s4.x3, p);
        let r1 = variational_rate(&j1, d);
        let r2 = variational_rate(&j2, &d.axpy(0.5 * h, &r1));
        let r3 = variational_rate(&j3, &d.axpy(0.5 * h, &r2));
        let r4 = variational_rate(&j4, &d.axpy(h, &r3));
        let mut out = *d;
        for n in 0..3 {
            for i in 0..2 {
                out.xprime[n][i] += w
                    * (r1.xprime[n][i]
                        + 2.0 * r2.xprime[n][i]
                        + 2.0 * r3.xprime[n][i]
                        + r4.xprime[n][i]);
            }
        }
        out
    } else {
        node.ipa
    };
    Node {
        state,
        ipa,
        acc: node.acc.advanced(zeta.zeta3, h, p.sigma),
    }
}

// Returns whether any component was clamped.
fn clamp_nonnegative(s: &mut HybridState) -> bool {
    let t = s.t;
    let mut clamped = false;
    for (name, v) in [("x1", &mut s.x1), ("x2", &mut s.x2), ("x3", &mut s.x3)] {
        if *v < 0.0 {
            log::warn!("{name} = {v:e} below zero at t = {t}; clamped to 0");
            *v = 0.0;
            clamped = true;
        }
    }
    clamped
}

/// Advances the continuous state by `dt` without event handling.
///
/// Steps that cross a noise-cell boundary are split so the noise is constant
/// on each sub-step.
pub fn integrate_step(
    s: &HybridState,
    p: &ModelParams,
    noise: &NoiseTrace,
    dt: f64,
) -> Result<HybridState> {
    s.check_finite()?;
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "dt",
            reason: format!("must be finite and >= 0, got {dt}"),
        });
    }
    let mut node = Node {
        state: *s,
        ipa: IpaState::zero(),
        acc: Zeta3Accumulator::new(s.t),
    };
    let target = s.t + dt;
    while target - node.state.t > MIN_STEP {
        let cell = noise.cell_index(node.state.t);
        let boundary = noise.cell_start(cell + 1);
        let stop = if boundary < target { boundary } else { target };
        let h = stop - node.state.t;
        node = rk4(&node, h, noise.cell(cell), p, false);
        node.state.t = stop;
        let _ = clamp_nonnegative(&mut node.state);
    }
    node.state.t = target;
    Ok(node.state)
}

fn crossed(mode: Mode, g: f64) -> bool {
    match mode {
        Mode::On => g <= 0.0,
        Mode::Off => g >= 0.0,
    }
}

/// Localizes a guard crossing inside a step of length `h` from `start`.
///
/// Every trial state is a single RK4 step of the trial length from `start`.
/// The final bracket of width `tol` is closed with a secant step. Returns the
/// node at `tau`.
fn locate(
    start: &Node,
    h: f64,
    zeta: NoiseValues,
    p: &ModelParams,
    th: &Thresholds,
    tol: f64,
) -> Node {
    let mode = start.state.q;
    let g0 = guard_value(&start.state, th);
    if crossed(mode, g0) {
        return *start;
    }
    let (mut lo, mut hi) = (0.0, h);
    let mut g_lo = g0;
    let mut g_hi = guard_value(&rk4(start, h, zeta, p, false).state, th);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = guard_value(&rk4(start, mid, zeta, p, false).state, th);
        if crossed(mode, g) {
            hi = mid;
            g_hi = g;
        } else {
            lo = mid;
            g_lo = g;
        }
    }
    let s = if g_lo != g_hi {
        (lo + (hi - lo) * g_lo / (g_lo - g_hi)).clamp(lo, hi)
    } else {
        hi
    };
    let mut node = rk4(start, s, zeta, p, true);
    node.state.t = start.state.t + s;
    node
}

/// Localizes the event inside `[t_lo, t_hi]` given the state at `t_lo`.
///
/// The bracket must not straddle a noise-cell boundary.
pub fn locate_event(
    s_lo: &HybridState,
    t_hi: f64,
    p: &ModelParams,
    th: &Thresholds,
    noise: &NoiseTrace,
    event_tol: f64,
) -> Result<HybridState> {
    s_lo.check_finite()?;
    let h = t_hi - s_lo.t;
    let cell = noise.cell_index(s_lo.t);
    if h < 0.0 || t_hi > noise.cell_start(cell + 1) {
        return Err(Error::InvalidArgument {
            name: "t_hi",
            reason: format!(
                "bracket [{}, {t_hi}] is empty or crosses a noise cell",
                s_lo.t
            ),
        });
    }
    let zeta = noise.cell(cell);
    let start = Node {
        state: *s_lo,
        ipa: IpaState::zero(),
        acc: Zeta3Accumulator::new(s_lo.t),
    };
    let end = rk4(&start, h, zeta, p, false);
    let mode = s_lo.q;
    if !crossed(mode, guard_value(&end.state, th)) {
        return Err(Error::InvalidArgument {
            name: "bracket",
            reason: "guard does not cross in the armed direction".into(),
        });
    }
    let node = locate(&start, h, zeta, p, th, event_tol);
    let rate = drift_unchecked(&node.state, p, zeta).guard_rate();
    if node.state.t > s_lo.t && rate.abs() < crate::ipa::TRANSVERSALITY_FLOOR {
        return Err(Error::TangentialCrossing {
            t: node.state.t,
            guard_drift: rate,
            floor: crate::ipa::TRANSVERSALITY_FLOOR,
        });
    }
    Ok(node.state)
}

/// Mode switch and clock reset at an event. Cell state is continuous.
pub fn apply_transition(s: &HybridState, kind: EventKind) -> Result<HybridState> {
    if kind.source_mode() != s.q {
        return Err(Error::Logic(format!(
            "event {kind} cannot fire in mode {}",
            s.q
        )));
    }
    let mut out = *s;
    out.q = s.q.flipped();
    match kind {
        EventKind::E1 => out.z1 = 0.0,
        EventKind::E2 => out.z2 = 0.0,
    }
    Ok(out)
}

/// Simulates one sample path over `[0, T]` with co-integrated IPA derivatives.
pub fn simulate(
    p: &ModelParams,
    th: &Thresholds,
    noise: &NoiseTrace,
    cfg: &SimConfig,
) -> Result<SamplePath> {
    p.validate()?;
    th.validate()?;
    cfg.validate_with(noise.grid_dt(), th)?;

    let horizon = cfg.horizon;
    let dt = cfg.dt;
    let mut node = Node {
        state: cfg.initial_state(),
        ipa: IpaState::zero(),
        acc: Zeta3Accumulator::new(0.0),
    };
    let mut samples = vec![Sample {
        state: node.state,
        ipa: node.ipa,
        zeta3_tilde: 0.0,
        knot: true,
    }];
    let mut events: Vec<EventRecord> = Vec::new();
    let mut intervals: Vec<Interval> = Vec::new();
    let mut interval_first = 0usize;
    let mut x3_anchor = node.state.x3;

    let mut clamped_steps = 0usize;
    let mut mesh_k: u64 = 0;
    let mut cell: usize = 0;

    while node.state.t < horizon {
        let t = node.state.t;
        let mut mesh_next = (mesh_k + 1) as f64 * dt;
        while mesh_next <= t + MIN_STEP {
            mesh_k += 1;
            mesh_next = (mesh_k + 1) as f64 * dt;
        }
        let mut cell_next = noise.cell_start(cell + 1);
        while cell_next <= t + MIN_STEP {
            cell += 1;
            cell_next = noise.cell_start(cell + 1);
        }
        let mut stop = mesh_next;
        let mut at_cell_boundary = false;
        if cell_next <= stop + MIN_STEP {
            stop = cell_next;
            at_cell_boundary = true;
        }
        let mut at_horizon = false;
        if horizon <= stop + MIN_STEP {
            stop = horizon;
            at_horizon = true;
            at_cell_boundary = false;
        }
        let h = stop - t;
        let zeta = noise.cell(cell);
        let mut next = rk4(&node, h, zeta, p, true);
        next.state.t = stop;

        let mode = node.state.q;
        let g_end = guard_value(&next.state, th);
        if crossed(mode, g_end) {
            let at_tau = locate(&node, h, zeta, p, th, cfg.event_tol);
            let kind = EventKind::armed_in(mode);
            if events.len() >= cfg.max_events {
                return Err(Error::RunawayChatter {
                    max_events: cfg.max_events,
                    t: at_tau.state.t,
                });
            }
            let mut pre_state = at_tau.state;
            clamped_steps += usize::from(clamp_nonnegative(&mut pre_state));
            let tau = pre_state.t;
            let guard_rate = drift_unchecked(&pre_state, p, zeta).guard_rate();
            let tau_prime =
                event_time_derivative(kind, &at_tau.ipa, guard_rate).map_err(|e| match e {
                    Error::TangentialCrossing {
                        guard_drift, floor, ..
                    } => Error::TangentialCrossing {
                        t: tau,
                        guard_drift,
                        floor,
                    },
                    other => other,
                })?;
            let h_pre = androgen_closed_form_unchecked(
                mode,
                x3_anchor,
                tau - at_tau.acc.anchor,
                p,
                at_tau.acc.value,
            );
            let ipa_post = apply_event_jump(kind, &at_tau.ipa, tau_prime, &pre_state, h_pre, p);
            let post_state = apply_transition(&pre_state, kind)?;

            samples.push(Sample {
                state: pre_state,
                ipa: at_tau.ipa,
                zeta3_tilde: at_tau.acc.value,
                knot: true,
            });
            intervals.push(Interval {
                mode,
                first: interval_first,
                last: samples.len() - 1,
                t_start: intervals.last().map_or(0.0, |iv: &Interval| iv.t_end),
                t_end: tau,
                x3_anchor,
            });
            samples.push(Sample {
                state: post_state,
                ipa: ipa_post,
                zeta3_tilde: 0.0,
                knot: true,
            });
            interval_first = samples.len() - 1;
            x3_anchor = post_state.x3;
            events.push(EventRecord {
                k: events.len() + 1,
                tau,
                kind,
                state_pre: pre_state,
                state_post: post_state,
                ipa_pre: at_tau.ipa,
                ipa_post,
                tau_prime,
                guard_rate,
                h_pre,
                zeta,
            });
            node = Node {
                state: post_state,
                ipa: ipa_post,
                acc: Zeta3Accumulator::new(tau),
            };
            continue;
        }

        clamped_steps += usize::from(clamp_nonnegative(&mut next.state));
        node = next;
        if at_horizon {
            node.state.t = horizon;
        }
        samples.push(Sample {
            state: node.state,
            ipa: node.ipa,
            zeta3_tilde: node.acc.value,
            knot: at_cell_boundary || at_horizon,
        });
    }

    intervals.push(Interval {
        mode: node.state.q,
        first: interval_first,
        last: samples.len() - 1,
        t_start: intervals.last().map_or(0.0, |iv| iv.t_end),
        t_end: horizon,
        x3_anchor,
    });

    Ok(SamplePath {
        horizon,
        seed: noise.seed(),
        thresholds: *th,
        events,
        samples,
        intervals,
        clamped_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSettings;

    fn reference() -> (ModelParams, Thresholds, NoiseTrace, SimConfig) {
        let cfg = SimConfig::default();
        let noise = NoiseTrace::generate(NoiseSettings::zero(5.0), cfg.horizon).unwrap();
        (ModelParams::default(), Thresholds::default(), noise, cfg)
    }

    #[test]
    fn zero_step_is_identity() {
        let (p, _, noise, cfg) = reference();
        let s = cfg.initial_state();
        assert_eq!(integrate_step(&s, &p, &noise, 0.0).unwrap(), s);
    }

    #[test]
    fn step_splits_match_one_step_closely() {
        let (p, _, noise, cfg) = reference();
        let s = cfg.initial_state();
        let one = integrate_step(&s, &p, &noise, 0.05).unwrap();
        let half = integrate_step(&s, &p, &noise, 0.025).unwrap();
        let two = integrate_step(&half, &p, &noise, 0.025).unwrap();
        assert!((one.x1 - two.x1).abs() < 1e-9);
        assert!((one.z1 - 0.05).abs() < 1e-15);
    }

    #[test]
    fn transition_resets_the_right_clock() {
        let mut s = HybridState::initial(Mode::On, 3.0, 1.0, 0.5);
        s.z1 = 12.0;
        s.z2 = 7.0;
        let off = apply_transition(&s, EventKind::E1).unwrap();
        assert_eq!((off.q, off.z1, off.z2), (Mode::Off, 0.0, 7.0));
        assert_eq!((off.x1, off.x2, off.x3), (s.x1, s.x2, s.x3));
        let on = apply_transition(&off, EventKind::E2).unwrap();
        assert_eq!((on.q, on.z2), (Mode::On, 0.0));
        assert!(apply_transition(&s, EventKind::E2).is_err());
    }

    #[test]
    fn located_event_sits_on_the_threshold() {
        let (p, th, noise, cfg) = reference();
        let path = simulate(&p, &th, &noise, &cfg).unwrap();
        let tau = path.events[0].tau;
        let lo = path
            .samples
            .iter()
            .rev()
            .find(|s| s.state.t < tau - 0.01)
            .unwrap()
            .state;
        let hi = (lo.t + cfg.dt).min(noise.cell_start(noise.cell_index(lo.t) + 1));
        let s = locate_event(&lo, hi, &p, &th, &noise, 1e-12).unwrap();
        assert!((s.psa() - th.theta1).abs() < 1e-9);
        assert!((s.t - tau).abs() < 1e-7);
    }

    #[test]
    fn reference_path_cycles_and_covers_horizon() {
        let (p, th, noise, cfg) = reference();
        let path = simulate(&p, &th, &noise, &cfg).unwrap();
        path.check_invariants().unwrap();
        assert_eq!(path.k_t(), 11);
        assert_eq!(path.final_sample().state.t, cfg.horizon);
        assert_eq!(path.intervals.len(), path.k_t());
        assert_eq!(path.on_periods().len(), 6);
    }

    #[test]
    fn event_cap_raises_runaway_chatter() {
        let (p, th, noise, mut cfg) = reference();
        cfg.max_events = 3;
        let err = simulate(&p, &th, &noise, &cfg).unwrap_err();
        assert!(matches!(err, Error::RunawayChatter { max_events: 3, .. }));
    }

    #[test]
    fn off_start_rejected() {
        let (p, th, noise, mut cfg) = reference();
        cfg.initial_mode = Mode::Off;
        assert!(matches!(
            simulate(&p, &th, &noise, &cfg),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn short_horizon_without_events() {
        let (p, th, _, mut cfg) = reference();
        cfg.horizon = 50.0;
        let noise = NoiseTrace::generate(NoiseSettings::zero(5.0), cfg.horizon).unwrap();
        let path = simulate(&p, &th, &noise, &cfg).unwrap();
        assert_eq!(path.k_t(), 1);
        assert!(path.samples.iter().all(|s| s.ipa == IpaState::zero()));
    }
}
