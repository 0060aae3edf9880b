//! Closed-loop violation tracking and the online relaxation-parameter
//! update.
//!
//! Violations of the original state rows `G x <= g` are recorded with an
//! optional practical margin `epsilon`, their time-average `Y` is kept
//! exactly as integer counts over steps, and the relaxation vector `h`
//! evolves multiplicatively:
//!
//! ```text
//! h_i(t) = h_i(t-1) * [1 + (alpha_i - Y_i(t) + (2 Y_i(t) - 1) / (2(t+1))) / gamma_i]
//! ```
//!
//! clamped so the relaxed bounds never leave the physical range. In joint
//! mode a single violation probability governs all rows simultaneously and
//! every component receives the shared update. Adaptation stays disabled
//! (traditional mode, `h = 0`) until the trigger fires: the first step at
//! which the state touches one of its bounds.

use nalgebra::DVector;
use thiserror::Error;

use crate::lti::ConstraintSpec;

/// Multiplicative updates cannot escape an exactly-zero h; keep the
/// post-trigger parameter at or below this ceiling so adaptation can act.
pub const H_ZERO_CEIL: f64 = -1e-6;

/// Default practical-violation margin, in state units.
pub const DEFAULT_EPSILON: f64 = 0.001;

/// Default absolute tolerance for the bound-touch trigger.
pub const DEFAULT_TRIGGER_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("h update requires the trigger to have fired")]
    NotTriggered,
    #[error("h update requires at least one recorded observation")]
    NoObservations,
    #[error("update factor K[{index}] = {k} <= -1 would flip the sign of h; gamma is mis-tuned")]
    UpdateOutOfRange { index: usize, k: f64 },
    #[error("{context} has {got} entries, expected {expected}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("gamma[{index}] = {value} must be positive")]
    BadGamma { index: usize, value: f64 },
    #[error("h[{index}] = {value} must be <= 0")]
    PositiveH { index: usize, value: f64 },
}

/// Per-step violation indicators, one per state row, plus the joint
/// indicator (any member violating).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationRecord {
    pub step: u64,
    pub indicators: Vec<bool>,
    pub jcc: bool,
}

/// Violation statistics and the adaptive relaxation parameter for one
/// closed-loop run. Single-writer: one simulation owns one state.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    t: u64,
    h: DVector<f64>,
    violation_count: Vec<u64>,
    joint_count: u64,
    triggered: bool,
    pub epsilon: f64,
    gamma: DVector<f64>,
    alpha: DVector<f64>,
    jcc_alpha: Option<f64>,
    h_trigger: DVector<f64>,
    /// Componentwise lower clamp keeping the relaxed bounds physical
    /// (for SOC: `h1 >= soc_max - 1`, `h2 >= -soc_min`).
    h_floor: DVector<f64>,
}

impl AdaptiveState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: DVector<f64>,
        jcc_alpha: Option<f64>,
        gamma: DVector<f64>,
        epsilon: f64,
        h0: DVector<f64>,
        h_trigger: DVector<f64>,
        h_floor: DVector<f64>,
    ) -> Result<Self, AdaptError> {
        let r = alpha.len();
        for (name, v) in [
            ("gamma", gamma.len()),
            ("h0", h0.len()),
            ("h_trigger", h_trigger.len()),
            ("h_floor", h_floor.len()),
        ] {
            if v != r {
                return Err(AdaptError::Shape {
                    context: name,
                    expected: r,
                    got: v,
                });
            }
        }
        for (i, &g) in gamma.iter().enumerate() {
            if g <= 0.0 {
                return Err(AdaptError::BadGamma { index: i, value: g });
            }
        }
        for (i, &v) in h0.iter().chain(h_trigger.iter()).enumerate() {
            if v > 0.0 {
                return Err(AdaptError::PositiveH {
                    index: i % r,
                    value: v,
                });
            }
        }
        Ok(Self {
            t: 0,
            h: h0,
            violation_count: vec![0; r],
            joint_count: 0,
            triggered: false,
            epsilon,
            gamma,
            alpha,
            jcc_alpha,
            h_trigger,
            h_floor,
        })
    }

    /// Steps observed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn triggered(&self) -> bool {
        self.triggered
    }

    pub fn violation_count(&self, i: usize) -> u64 {
        self.violation_count[i]
    }

    pub fn joint_count(&self) -> u64 {
        self.joint_count
    }

    /// Per-constraint time-average of violations, zero before the first
    /// observation.
    pub fn y(&self, i: usize) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.violation_count[i] as f64 / self.t as f64
        }
    }

    /// Joint time-average (any member violating counts once).
    pub fn joint_y(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.joint_count as f64 / self.t as f64
        }
    }

    /// The time-average driving the update of component `i`: the joint
    /// average in joint mode, otherwise the component's own.
    pub fn effective_y(&self, i: usize) -> f64 {
        if self.jcc_alpha.is_some() {
            self.joint_y()
        } else {
            self.y(i)
        }
    }

    fn effective_alpha(&self, i: usize) -> f64 {
        self.jcc_alpha.unwrap_or(self.alpha[i])
    }

    /// Overwrites `h` (used after the on-peak freeze resolves the step's
    /// final value). Values must stay nonpositive.
    pub fn set_h(&mut self, h: DVector<f64>) -> Result<(), AdaptError> {
        for (i, &v) in h.iter().enumerate() {
            if v > 0.0 {
                return Err(AdaptError::PositiveH { index: i, value: v });
            }
        }
        self.h = h;
        Ok(())
    }

    /// Resets `t`, the violation counts, and `h` to the triggering value,
    /// keeping the trigger armed. Used by the restart variant.
    pub fn restart(&mut self) {
        self.t = 0;
        self.violation_count.iter_mut().for_each(|c| *c = 0);
        self.joint_count = 0;
        self.h = self.h_trigger.clone();
        self.triggered = true;
    }

    /// Records the realized state at `t+1` against the original rows
    /// `G x <= g + epsilon` and advances the statistics.
    pub fn observe_state(
        &mut self,
        x_next: &DVector<f64>,
        spec: &ConstraintSpec,
    ) -> ViolationRecord {
        let gx = &spec.g_mat * x_next;
        let mut indicators = Vec::with_capacity(gx.len());
        let mut jcc = false;
        for i in 0..gx.len() {
            let v = gx[i] > spec.g_vec[i] + self.epsilon;
            if v {
                self.violation_count[i] += 1;
                jcc = true;
            }
            indicators.push(v);
        }
        if jcc {
            self.joint_count += 1;
        }
        self.t += 1;
        ViolationRecord {
            step: self.t,
            indicators,
            jcc,
        }
    }

    /// Evaluates the online update rule and returns the candidate `h(t)`,
    /// clamped to the physical floors and the zero ceiling. Does not
    /// overwrite the stored `h`; the on-peak freeze decides that.
    pub fn update_h(&self) -> Result<DVector<f64>, AdaptError> {
        if !self.triggered {
            return Err(AdaptError::NotTriggered);
        }
        if self.t == 0 {
            return Err(AdaptError::NoObservations);
        }
        let mut out = self.h.clone();
        for i in 0..out.len() {
            let y = self.effective_y(i);
            let alpha = self.effective_alpha(i);
            let updated = h_update_value(self.h[i], alpha, y, self.t, self.gamma[i])
                .map_err(|_| AdaptError::UpdateOutOfRange {
                    index: i,
                    k: (alpha - y + (2.0 * y - 1.0) / (2.0 * (self.t as f64 + 1.0)))
                        / self.gamma[i],
                })?;
            out[i] = updated.max(self.h_floor[i]).min(H_ZERO_CEIL);
        }
        Ok(out)
    }

    /// Arms the relaxation when any state row is at (or within `tol` of)
    /// its bound; on trigger, `h` jumps to the configured triggering value.
    /// Returns the post-call trigger status.
    pub fn check_trigger(&mut self, x_now: &DVector<f64>, spec: &ConstraintSpec, tol: f64) -> bool {
        if self.triggered {
            return true;
        }
        let gx = &spec.g_mat * x_now;
        for i in 0..gx.len() {
            if gx[i] >= spec.g_vec[i] - tol {
                self.triggered = true;
                self.h = self.h_trigger.clone();
                return true;
            }
        }
        false
    }
}

/// One component of the multiplicative update rule:
/// `h * [1 + (alpha - y + (2y - 1) / (2(t+1))) / gamma]`.
///
/// Errors when the factor would flip the sign of `h`.
pub fn h_update_value(
    h_prev: f64,
    alpha: f64,
    y: f64,
    t: u64,
    gamma: f64,
) -> Result<f64, AdaptError> {
    let t = t as f64;
    let bracket = alpha - y + (2.0 * y - 1.0) / (2.0 * (t + 1.0));
    let k = bracket / gamma;
    if k <= -1.0 {
        return Err(AdaptError::UpdateOutOfRange { index: 0, k });
    }
    Ok(h_prev * (1.0 + k))
}

/// Operational override for demand-charge hours: while the MPC start step
/// is on-peak, `h` may not increase; any increase is reset to the previous
/// value, decreases pass through.
pub fn apply_onpeak_freeze(
    h_candidate: &DVector<f64>,
    h_previous: &DVector<f64>,
    now_in_onpeak: bool,
) -> DVector<f64> {
    if !now_in_onpeak {
        return h_candidate.clone();
    }
    DVector::from_fn(h_candidate.len(), |i, _| {
        if h_candidate[i] > h_previous[i] {
            h_previous[i]
        } else {
            h_candidate[i]
        }
    })
}
