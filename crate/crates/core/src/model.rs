//! Domain types and the time-driven dynamics of the two-mode tumor model.
//!
//! Continuous state is `(x1, x2, x3, z1, z2)`: hormone-sensitive cells,
//! castration-resistant cells, serum androgen, and the on/off clocks. PSA is
//! read as `x1 + x2` (both populations secrete equally).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Biological rate constants of the cell and androgen dynamics.
///
/// The defaults are an illustrative parameter set, not a clinical one. They
/// are chosen so that the closed loop cycles several times over a few years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// HSC proliferation constant (1/day).
    pub alpha1: f64,
    /// CRC proliferation constant (1/day).
    pub alpha2: f64,
    /// HSC apoptosis constant (1/day).
    pub beta1: f64,
    /// CRC apoptosis constant (1/day).
    pub beta2: f64,
    /// Center of the HSC proliferation sigmoid (concentration).
    pub k1: f64,
    /// Steepness of the HSC proliferation sigmoid (1/concentration).
    pub k2: f64,
    /// Center of the HSC apoptosis sigmoid (concentration).
    pub k3: f64,
    /// Steepness of the HSC apoptosis sigmoid (1/concentration).
    pub k4: f64,
    /// HSC to CRC conversion rate (1/day).
    pub m1: f64,
    /// CRC androgen sensitivity (dimensionless).
    pub d: f64,
    /// Patient-specific androgen constant (concentration).
    pub x30: f64,
    /// Androgen degradation time constant (days).
    pub sigma: f64,
    /// HSC basal degradation (1/day).
    pub lambda1: f64,
    /// HSC basal production (cells/day).
    pub mu1: f64,
    /// Androgen basal production (concentration/day).
    pub mu3: f64,
    /// PSA secretion coefficient of HSCs. Fixed at 1.
    pub c1: f64,
    /// PSA secretion coefficient of CRCs. Fixed at 1.
    pub c2: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha1: 0.04,
            alpha2: 0.008,
            beta1: 0.008,
            beta2: 0.006,
            k1: 8.0,
            k2: 0.5,
            k3: 12.0,
            k4: 0.5,
            m1: 0.0002,
            d: 1.0,
            x30: 20.0,
            sigma: 8.0,
            lambda1: 0.014,
            mu1: 0.01,
            mu3: 0.05,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("model.alpha1", self.alpha1),
            ("model.alpha2", self.alpha2),
            ("model.beta1", self.beta1),
            ("model.beta2", self.beta2),
            ("model.k2", self.k2),
            ("model.k4", self.k4),
            ("model.m1", self.m1),
            ("model.d", self.d),
            ("model.lambda1", self.lambda1),
            ("model.mu1", self.mu1),
            ("model.mu3", self.mu3),
        ];
        for (field, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation {
                    field: field.into(),
                    message: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        for (field, v) in [("model.k1", self.k1), ("model.k3", self.k3)] {
            if !v.is_finite() {
                return Err(Error::Validation {
                    field: field.into(),
                    message: format!("must be finite, got {v}"),
                });
            }
        }
        for (field, v) in [("model.sigma", self.sigma), ("model.x30", self.x30)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    field: field.into(),
                    message: format!("must be > 0, got {v}"),
                });
            }
        }
        if self.c1 != 1.0 || self.c2 != 1.0 {
            return Err(Error::Validation {
                field: "model.c1/model.c2".into(),
                message: format!(
                    "PSA coefficients are fixed at 1, got c1 = {} and c2 = {}",
                    self.c1, self.c2
                ),
            });
        }
        Ok(())
    }

    /// Logistic factor `[1 + exp(-(x3 - k1) k2)]^-1` of HSC proliferation.
    pub fn proliferation_sigmoid(&self, x3: f64) -> f64 {
        logistic((x3 - self.k1) * self.k2)
    }

    /// Logistic factor `[1 + exp(-(x3 - k3) k4)]^-1` of HSC apoptosis.
    pub fn apoptosis_sigmoid(&self, x3: f64) -> f64 {
        logistic((x3 - self.k3) * self.k4)
    }
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// The lower and upper PSA thresholds together with their feasible boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
    pub theta1_min: f64,
    pub theta1_max: f64,
    pub theta2_min: f64,
    pub theta2_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta1: 4.0,
            theta2: 10.0,
            theta1_min: 2.0,
            theta1_max: 6.0,
            theta2_min: 7.0,
            theta2_max: 16.0,
        }
    }
}

impl Thresholds {
    pub fn theta(&self) -> [f64; 2] {
        [self.theta1, self.theta2]
    }

    /// Same boxes, different threshold values.
    pub fn with_theta(&self, theta: [f64; 2]) -> Self {
        Self {
            theta1: theta[0],
            theta2: theta[1],
            ..*self
        }
    }

    pub fn lower_bounds(&self) -> [f64; 2] {
        [self.theta1_min, self.theta2_min]
    }

    pub fn upper_bounds(&self) -> [f64; 2] {
        [self.theta1_max, self.theta2_max]
    }

    /// Checks the box ordering only.
    pub fn validate_bounds(&self) -> Result<()> {
        let all = [
            self.theta1_min,
            self.theta1_max,
            self.theta2_min,
            self.theta2_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                field: "thresholds".into(),
                message: "bounds must be finite".into(),
            });
        }
        if self.theta1_min > self.theta1_max {
            return Err(Error::Validation {
                field: "thresholds.theta1_min".into(),
                message: format!(
                    "theta1_min = {} exceeds theta1_max = {}",
                    self.theta1_min, self.theta1_max
                ),
            });
        }
        if self.theta2_min > self.theta2_max {
            return Err(Error::Validation {
                field: "thresholds.theta2_min".into(),
                message: format!(
                    "theta2_min = {} exceeds theta2_max = {}",
                    self.theta2_min, self.theta2_max
                ),
            });
        }
        if self.theta1_max >= self.theta2_min {
            return Err(Error::Validation {
                field: "thresholds.theta1_max".into(),
                message: format!(
                    "ordering constraint theta1_max < theta2_min violated: theta1_max = {} >= theta2_min = {}",
                    self.theta1_max, self.theta2_min
                ),
            });
        }
        Ok(())
    }

    /// Box ordering plus membership of the current values.
    pub fn validate(&self) -> Result<()> {
        self.validate_bounds()?;
        if !(self.theta1_min..=self.theta1_max).contains(&self.theta1) {
            return Err(Error::Validation {
                field: "thresholds.theta1".into(),
                message: format!(
                    "theta1 = {} outside [{}, {}]",
                    self.theta1, self.theta1_min, self.theta1_max
                ),
            });
        }
        if !(self.theta2_min..=self.theta2_max).contains(&self.theta2) {
            return Err(Error::Validation {
                field: "thresholds.theta2".into(),
                message: format!(
                    "theta2 = {} outside [{}, {}]",
                    self.theta2, self.theta2_min, self.theta2_max
                ),
            });
        }
        Ok(())
    }
}

/// Therapy mode of the automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
}

impl Mode {
    pub fn flipped(self) -> Self {
        match self {
            Mode::On => Mode::Off,
            Mode::Off => Mode::On,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::On => "ON",
            Mode::Off => "OFF",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mode plus continuous state at a time instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub t: f64,
    pub q: Mode,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub z1: f64,
    pub z2: f64,
}

impl HybridState {
    /// Initial state at `t = 0` with both clocks at zero.
    pub fn initial(q: Mode, x1: f64, x2: f64, x3: f64) -> Self {
        Self {
            t: 0.0,
            q,
            x1,
            x2,
            x3,
            z1: 0.0,
            z2: 0.0,
        }
    }

    pub fn psa(&self) -> f64 {
        self.x1 + self.x2
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        ensure_finite("t", self.t)?;
        ensure_finite("x1", self.x1)?;
        ensure_finite("x2", self.x2)?;
        ensure_finite("x3", self.x3)?;
        ensure_finite("z1", self.z1)?;
        ensure_finite("z2", self.z2)?;
        Ok(())
    }
}

/// The two endogenous events of the automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// PSA reaches `theta1` from above: treatment stops (`ON -> OFF`).
    #[serde(rename = "e1")]
    E1,
    /// PSA reaches `theta2` from below: treatment resumes (`OFF -> ON`).
    #[serde(rename = "e2")]
    E2,
}

impl EventKind {
    /// The event armed while in `mode`.
    pub fn armed_in(mode: Mode) -> Self {
        match mode {
            Mode::On => EventKind::E1,
            Mode::Off => EventKind::E2,
        }
    }

    /// Mode in force before the event.
    pub fn source_mode(self) -> Mode {
        match self {
            EventKind::E1 => Mode::On,
            EventKind::E2 => Mode::Off,
        }
    }

    /// Index (0 or 1) of the threshold this event's guard depends on.
    pub fn theta_index(self) -> usize {
        match self {
            EventKind::E1 => 0,
            EventKind::E2 => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::E1 => "e1",
            EventKind::E2 => "e2",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Noise values `(zeta1, zeta2, zeta3)` in force at some instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseValues {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
}

/// Right-hand side `(dx1, dx2, dx3, dz1, dz2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Drift {
    pub dx1: f64,
    pub dx2: f64,
    pub dx3: f64,
    pub dz1: f64,
    pub dz2: f64,
}

impl Drift {
    /// Time derivative of the guard `x1 + x2 - theta`.
    pub fn guard_rate(&self) -> f64 {
        self.dx1 + self.dx2
    }
}

/// Evaluates the time-driven dynamics in the current mode.
pub fn drift(s: &HybridState, p: &ModelParams, zeta: NoiseValues) -> Result<Drift> {
    s.check_finite()?;
    ensure_finite("zeta1", zeta.zeta1)?;
    ensure_finite("zeta2", zeta.zeta2)?;
    ensure_finite("zeta3", zeta.zeta3)?;
    Ok(drift_unchecked(s, p, zeta))
}

#[inline]
pub(crate) fn drift_unchecked(s: &HybridState, p: &ModelParams, zeta: NoiseValues) -> Drift {
    let (x1, x2, x3) = (s.x1, s.x2, s.x3);
    let androgen_deficit = 1.0 - x3 / p.x30;
    let dx1 = p.alpha1 * p.proliferation_sigmoid(x3) * x1
        - p.beta1 * p.apoptosis_sigmoid(x3) * x1
        - (p.m1 * androgen_deficit + p.lambda1) * x1
        + p.mu1
        + zeta.zeta1;
    let dx2 = (p.alpha2 * (1.0 - p.d * x3 / p.x30) - p.beta2) * x2
        + p.m1 * androgen_deficit * x1
        + zeta.zeta2;
    let (dx3, dz1, dz2) = match s.q {
        Mode::On => (-x3 / p.sigma + p.mu3 + zeta.zeta3, 1.0, 0.0),
        Mode::Off => ((p.x30 - x3) / p.sigma + p.mu3 + zeta.zeta3, 0.0, 1.0),
    };
    Drift {
        dx1,
        dx2,
        dx3,
        dz1,
        dz2,
    }
}

/// Nonzero entries of `d f / d x` for the `(x1, x2, x3)` block.
///
/// The clocks do not feed back into the cell dynamics and the noise is
/// additive, so the Jacobian is the same in both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub j11: f64,
    pub j13: f64,
    pub j21: f64,
    pub j22: f64,
    pub j23: f64,
    pub j33: f64,
}

#[inline]
pub fn jacobian(x1: f64, x2: f64, x3: f64, p: &ModelParams) -> Jacobian {
    let sa = p.proliferation_sigmoid(x3);
    let sb = p.apoptosis_sigmoid(x3);
    let androgen_deficit = 1.0 - x3 / p.x30;
    Jacobian {
        j11: p.alpha1 * sa - p.beta1 * sb - p.m1 * androgen_deficit - p.lambda1,
        j13: (p.alpha1 * p.k2 * sa * (1.0 - sa) - p.beta1 * p.k4 * sb * (1.0 - sb) + p.m1 / p.x30)
            * x1,
        j21: p.m1 * androgen_deficit,
        j22: p.alpha2 * (1.0 - p.d * x3 / p.x30) - p.beta2,
        j23: -(p.alpha2 * p.d * x2 + p.m1 * x1) / p.x30,
        j33: -1.0 / p.sigma,
    }
}

/// `1 - exp(-elapsed / sigma)` without cancellation for short intervals.
#[inline]
pub(crate) fn relaxation(elapsed: f64, sigma: f64) -> f64 {
    -(-elapsed / sigma).exp_m1()
}

/// Closed-form androgen level `elapsed` days after an interval anchor.
///
/// `zeta3_tilde` is the exponentially weighted noise integral accumulated
/// since the anchor (see [`zeta3_tilde_step`]).
pub fn androgen_closed_form(
    mode: Mode,
    x3_at_anchor: f64,
    elapsed: f64,
    p: &ModelParams,
    zeta3_tilde: f64,
) -> Result<f64> {
    ensure_finite("elapsed", elapsed)?;
    ensure_finite("x3_at_anchor", x3_at_anchor)?;
    ensure_finite("zeta3_tilde", zeta3_tilde)?;
    if elapsed < 0.0 {
        return Err(Error::InvalidArgument {
            name: "elapsed",
            reason: format!("must be >= 0, got {elapsed}"),
        });
    }
    Ok(androgen_closed_form_unchecked(
        mode,
        x3_at_anchor,
        elapsed,
        p,
        zeta3_tilde,
    ))
}

#[inline]
pub(crate) fn androgen_closed_form_unchecked(
    mode: Mode,
    x3_at_anchor: f64,
    elapsed: f64,
    p: &ModelParams,
    zeta3_tilde: f64,
) -> f64 {
    let decay = (-elapsed / p.sigma).exp();
    let steady = match mode {
        Mode::On => p.mu3 * p.sigma,
        Mode::Off => p.mu3 * p.sigma + p.x30,
    };
    x3_at_anchor * decay + steady * relaxation(elapsed, p.sigma) + zeta3_tilde
}

/// Exact advance of `int exp(-(t - s)/sigma) zeta3(s) ds` over a step on
/// which `zeta3` is constant.
pub fn zeta3_tilde_step(current: f64, zeta3_cell: f64, dt: f64, sigma: f64) -> f64 {
    current * (-dt / sigma).exp() + zeta3_cell * sigma * relaxation(dt, sigma)
}

/// Signed PSA distance to the threshold armed in the current mode.
///
/// A crossing from above in `ON` fires `e1`; from below in `OFF` fires `e2`.
pub fn guard_value(s: &HybridState, th: &Thresholds) -> f64 {
    match s.q {
        Mode::On => s.psa() - th.theta1,
        Mode::Off => s.psa() - th.theta2,
    }
}
