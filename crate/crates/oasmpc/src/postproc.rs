//! Closed-loop correction of the first-step optimal inputs for realized
//! uncertainty.
//!
//! The pattern: one primary control source absorbs the uncertainty up to
//! its hard limits, the state update is clamped to the current design
//! limits `g - h(t)` (recomputing the primary input when a state clamp
//! binds), and a secondary source closes the coupling equality exactly.
//! For the battery case study the primary source is BESS power, the
//! secondary is grid import, and the coupling is the power balance.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lti::{ConstraintSpec, LtiSystem};

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("B[0][{0}] is zero: the primary input cannot move the state, recomputation is singular")]
    SingularRecompute(usize),
    #[error("post-processing requires a scalar state (n = 1), got n = {0}")]
    StateDim(usize),
    #[error("post-processing requires exactly one coupling row, got {0}")]
    CouplingRows(usize),
    #[error("B does not have a right inverse: B B^T = {0}")]
    NoRightInverse(f64),
    #[error("B B^dagger deviates from identity by {0:.3e}")]
    RightInverseCheck(f64),
    #[error("secondary input coefficient in the coupling row is zero")]
    SingularSecondary,
    #[error("{context}: expected {expected} entries, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Configuration of the two-source correction: which input is primary /
/// secondary, the uncertainty gain `D = B^dagger E`, and the primary
/// source's hard limits.
#[derive(Debug, Clone)]
pub struct PostProcessConfig {
    pub primary_index: usize,
    pub secondary_index: usize,
    pub d_mat: DMatrix<f64>,
    /// Hard primary-input limits (lower, upper), not time-varying.
    pub primary_limits: (f64, f64),
}

impl PostProcessConfig {
    /// Derives the configuration from the system: checks the right-inverse
    /// property `B B^dagger = I` and the structural requirement that the
    /// state update does not depend on the secondary source.
    pub fn from_system(
        sys: &LtiSystem,
        primary_index: usize,
        secondary_index: usize,
        primary_limits: (f64, f64),
    ) -> Result<Self, PostprocError> {
        let n = sys.state_dim();
        if n != 1 {
            return Err(PostprocError::StateDim(n));
        }
        let b = sys.b();
        // Right inverse of the 1 x m input matrix: B^dagger = B^T / (B B^T).
        let bbt: f64 = b.iter().map(|v| v * v).sum();
        if bbt == 0.0 {
            return Err(PostprocError::NoRightInverse(bbt));
        }
        let b_dag = b.transpose() / bbt;
        let check = (b * &b_dag)[(0, 0)];
        if (check - 1.0).abs() > 1e-10 {
            return Err(PostprocError::RightInverseCheck((check - 1.0).abs()));
        }
        if b[(0, secondary_index)] != 0.0 {
            // The state transition must not depend on the secondary source.
            return Err(PostprocError::SingularRecompute(secondary_index));
        }
        let d_mat = b_dag * sys.e();
        Ok(Self {
            primary_index,
            secondary_index,
            d_mat,
            primary_limits,
        })
    }
}

/// Which limits bound during one correction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampFlags {
    pub primary_lower: bool,
    pub primary_upper: bool,
    pub state_lower: bool,
    pub state_upper: bool,
}

impl ClampFlags {
    pub fn none(&self) -> bool {
        !(self.primary_lower || self.primary_upper || self.state_lower || self.state_upper)
    }
}

/// Outcome of one closed-loop correction step.
#[derive(Debug, Clone)]
pub struct ClosedLoopStep {
    pub u_applied: DVector<f64>,
    pub x_next: DVector<f64>,
    pub w_realized: DVector<f64>,
    pub clamp_flags: ClampFlags,
}

/// Time-varying state design limits `g - h(t)` expressed as interval
/// bounds on the scalar state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDesignLimits {
    pub lower: f64,
    pub upper: f64,
}

impl StateDesignLimits {
    /// Extracts interval bounds from single-coefficient rows of
    /// `G x <= g - h` for a scalar state.
    pub fn from_rows(spec: &ConstraintSpec, h: &DVector<f64>) -> Self {
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for i in 0..spec.state_rows() {
            let gi = spec.g_mat[(i, 0)];
            let rhs = spec.g_vec[i] - h[i];
            if gi > 0.0 {
                upper = upper.min(rhs / gi);
            } else if gi < 0.0 {
                lower = lower.max(rhs / gi);
            }
        }
        Self { lower, upper }
    }
}

/// Corrects the optimal first input for the realized uncertainty.
///
/// The primary input absorbs `D w` up to its hard limits; the state update
/// is clamped to the design limits with the primary input recomputed when
/// a state clamp binds (then re-clamped to the hard limits, with one final
/// state recomputation if that changed anything); the secondary input
/// closes the coupling equality `M u = m(t) + F w` exactly, with `m_now`
/// the step's coupling right-hand side.
#[allow(clippy::too_many_arguments)]
pub fn correct_for_uncertainty(
    u_star: &DVector<f64>,
    x_now: &DVector<f64>,
    w: &DVector<f64>,
    m_now: &DVector<f64>,
    cfg: &PostProcessConfig,
    design_limits: StateDesignLimits,
    sys: &LtiSystem,
    spec: &ConstraintSpec,
) -> Result<ClosedLoopStep, PostprocError> {
    let m = sys.input_dim();
    if sys.state_dim() != 1 {
        return Err(PostprocError::StateDim(sys.state_dim()));
    }
    if spec.coupling_rows() != 1 {
        return Err(PostprocError::CouplingRows(spec.coupling_rows()));
    }
    if u_star.len() != m {
        return Err(PostprocError::Shape {
            context: "u_star",
            expected: m,
            got: u_star.len(),
        });
    }
    if x_now.len() != 1 {
        return Err(PostprocError::Shape {
            context: "x_now",
            expected: 1,
            got: x_now.len(),
        });
    }
    let b11 = sys.b()[(0, cfg.primary_index)];
    if b11 == 0.0 {
        return Err(PostprocError::SingularRecompute(cfg.primary_index));
    }

    let mut flags = ClampFlags::default();
    let (u_lo, u_hi) = cfg.primary_limits;

    // Primary source absorbs its share of the uncertainty, up to hard limits.
    let d_row = cfg.d_mat.row(cfg.primary_index);
    let dw: f64 = d_row.iter().zip(w.iter()).map(|(d, wv)| d * wv).sum();
    let mut u1 = u_star[cfg.primary_index] + dw;
    if u1 > u_hi {
        u1 = u_hi;
        flags.primary_upper = true;
    } else if u1 < u_lo {
        u1 = u_lo;
        flags.primary_lower = true;
    }

    // State update clamped to the design limits; a binding clamp recomputes
    // the primary input to land exactly on the limit.
    let a_x = sys.a()[(0, 0)] * x_now[0];
    let mut x_next = a_x + b11 * u1;
    if x_next > design_limits.upper {
        x_next = design_limits.upper;
        flags.state_upper = true;
        u1 = (design_limits.upper - a_x) / b11;
    } else if x_next < design_limits.lower {
        x_next = design_limits.lower;
        flags.state_lower = true;
        u1 = (design_limits.lower - a_x) / b11;
    }
    // The recomputed input may exceed the hard limits when the state starts
    // outside the design band; resolve with one more pass, which is
    // consistent because the state is monotone in the primary input.
    if u1 > u_hi {
        u1 = u_hi;
        flags.primary_upper = true;
        x_next = a_x + b11 * u1;
    } else if u1 < u_lo {
        u1 = u_lo;
        flags.primary_lower = true;
        x_next = a_x + b11 * u1;
    }

    // Secondary source closes the coupling equality M u = m(t) + F w.
    let ms = spec.m_mat[(0, cfg.secondary_index)];
    if ms == 0.0 {
        return Err(PostprocError::SingularSecondary);
    }
    let fw: f64 = (0..spec.f_mat.ncols())
        .map(|j| spec.f_mat[(0, j)] * w[j])
        .sum();
    let mut u_applied = u_star.clone();
    u_applied[cfg.primary_index] = u1;
    let partial: f64 = (0..m)
        .filter(|&j| j != cfg.secondary_index)
        .map(|j| spec.m_mat[(0, j)] * u_applied[j])
        .sum();
    u_applied[cfg.secondary_index] = (m_now[0] + fw - partial) / ms;

    Ok(ClosedLoopStep {
        u_applied,
        x_next: DVector::from_element(1, x_next),
        w_realized: w.clone(),
        clamp_flags: flags,
    })
}

/// Grid-import balance for the battery case: given the applied battery
/// power and realized PV and load, the grid import that keeps
/// `u1 - u2 = PV_r - L_r` exact.
pub fn balance_secondary(u1_kw: f64, pv_real_kw: f64, load_real_kw: f64) -> f64 {
    u1_kw - (pv_real_kw - load_real_kw)
}
