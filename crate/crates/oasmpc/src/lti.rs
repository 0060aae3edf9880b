//! Discrete LTI system data, constraint data, and horizon stacking.
//!
//! A system `x(t+1) = A x(t) + B u(t) + E w(t)` with hard polytopic input
//! constraints `S u <= s`, coupling equalities `M u = m(t) + F w(t)`, and
//! chance-constrained state rows `G x <= g` is expanded over an `N`-step
//! prediction horizon into the compact form `x = 𝐀 x0 + 𝐁 u + 𝐄 w` with
//! block-stacked constraint data ready for LP construction.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LtiError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("alpha[{index}] = {value} outside the open interval (0, 0.5)")]
    AlphaRange { index: usize, value: f64 },
    #[error("horizon length must be >= 1")]
    EmptyHorizon,
    #[error("relaxation parameter must be componentwise <= 0, got h[{index}] = {value}")]
    PositiveRelaxation { index: usize, value: f64 },
}

fn shape_err(context: &'static str, expected: String, got: String) -> LtiError {
    LtiError::Shape {
        context,
        expected,
        got,
    }
}

/// Discrete LTI system `x(t+1) = A x(t) + B u(t) + E w(t)`.
///
/// Immutable after construction; dimensions `(n, m, p)` are derived from the
/// matrix shapes and checked once.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a_mat: DMatrix<f64>,
    b_mat: DMatrix<f64>,
    e_mat: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(
        a_mat: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        e_mat: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a_mat.nrows();
        if a_mat.ncols() != n {
            return Err(shape_err(
                "A",
                format!("{n}x{n}"),
                format!("{}x{}", a_mat.nrows(), a_mat.ncols()),
            ));
        }
        if b_mat.nrows() != n {
            return Err(shape_err(
                "B",
                format!("{n} rows"),
                format!("{} rows", b_mat.nrows()),
            ));
        }
        if e_mat.nrows() != n {
            return Err(shape_err(
                "E",
                format!("{n} rows"),
                format!("{} rows", e_mat.nrows()),
            ));
        }
        Ok(Self {
            a_mat,
            b_mat,
            e_mat,
        })
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a_mat.nrows()
    }

    /// Input dimension m.
    pub fn input_dim(&self) -> usize {
        self.b_mat.ncols()
    }

    /// Uncertainty dimension p.
    pub fn uncertainty_dim(&self) -> usize {
        self.e_mat.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a_mat
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b_mat
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e_mat
    }
}

/// Per-step constraint data: input polytope `S u <= s`, input coupling
/// `M u = m(t) + F w(t)`, chance-constrained state rows `G x <= g` with
/// per-row violation budgets `alpha`, an optional joint budget, and an
/// optional terminal lower bound on the final predicted state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub s_mat: DMatrix<f64>,
    pub s_vec: DVector<f64>,
    pub m_mat: DMatrix<f64>,
    pub f_mat: DMatrix<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
    pub alpha: DVector<f64>,
    /// Single violation probability for joint-chance-constraint mode.
    pub jcc_alpha: Option<f64>,
    /// Hard lower bound on x(t+N|t), when present.
    pub terminal_lb: Option<DVector<f64>>,
}

impl ConstraintSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s_mat: DMatrix<f64>,
        s_vec: DVector<f64>,
        m_mat: DMatrix<f64>,
        f_mat: DMatrix<f64>,
        g_mat: DMatrix<f64>,
        g_vec: DVector<f64>,
        alpha: DVector<f64>,
        jcc_alpha: Option<f64>,
        terminal_lb: Option<DVector<f64>>,
    ) -> Result<Self, LtiError> {
        if s_vec.len() != s_mat.nrows() {
            return Err(shape_err(
                "s",
                format!("{} entries", s_mat.nrows()),
                format!("{}", s_vec.len()),
            ));
        }
        if f_mat.nrows() != m_mat.nrows() {
            return Err(shape_err(
                "F",
                format!("{} rows", m_mat.nrows()),
                format!("{} rows", f_mat.nrows()),
            ));
        }
        if g_vec.len() != g_mat.nrows() {
            return Err(shape_err(
                "g",
                format!("{} entries", g_mat.nrows()),
                format!("{}", g_vec.len()),
            ));
        }
        if alpha.len() != g_mat.nrows() {
            return Err(shape_err(
                "alpha",
                format!("{} entries", g_mat.nrows()),
                format!("{}", alpha.len()),
            ));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !(a > 0.0 && a < 0.5) {
                return Err(LtiError::AlphaRange { index: i, value: a });
            }
        }
        if let Some(a) = jcc_alpha {
            if !(a > 0.0 && a < 0.5) {
                return Err(LtiError::AlphaRange {
                    index: usize::MAX,
                    value: a,
                });
            }
        }
        Ok(Self {
            s_mat,
            s_vec,
            m_mat,
            f_mat,
            g_mat,
            g_vec,
            alpha,
            jcc_alpha,
            terminal_lb,
        })
    }

    /// Number of input-polytope rows q.
    pub fn input_rows(&self) -> usize {
        self.s_mat.nrows()
    }

    /// Number of coupling rows d.
    pub fn coupling_rows(&self) -> usize {
        self.m_mat.nrows()
    }

    /// Number of chance-constrained state rows r.
    pub fn state_rows(&self) -> usize {
        self.g_mat.nrows()
    }
}

/// Horizon-stacked system and constraint data for one MPC step.
///
/// `stacked_b` is block lower triangular: block `(k, i)` (1-based step `k`,
/// input block `i`) equals `A^{k-1-i} B` for `i < k` and zero otherwise.
/// `stacked_h` repeats the current relaxation vector `h(t)` once per step.
#[derive(Debug, Clone)]
pub struct HorizonData {
    pub horizon_n: usize,
    pub stacked_a: DMatrix<f64>,
    pub stacked_b: DMatrix<f64>,
    pub stacked_e: DMatrix<f64>,
    pub stacked_s: DMatrix<f64>,
    pub stacked_s_vec: DVector<f64>,
    pub stacked_m: DMatrix<f64>,
    /// Forecast-driven right-hand sides `m(t+k|t)`, stacked over the horizon.
    pub coupling_rhs: DVector<f64>,
    pub stacked_g: DMatrix<f64>,
    pub stacked_g_vec: DVector<f64>,
    pub stacked_h: DVector<f64>,
    /// Hard lower bound on the final predicted state, when configured.
    pub terminal_lb: Option<DVector<f64>>,
    n: usize,
    m: usize,
}

impl HorizonData {
    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }
}

/// Expands per-step definitions into the compact horizon form.
///
/// The nominal form sets `w = 0`; `stacked_e` is still produced for
/// closed-loop bookkeeping. `m_forecast` supplies the coupling right-hand
/// side for each horizon step and `h_now` the current relaxation vector,
/// repeated across the horizon.
pub fn stack_horizon(
    sys: &LtiSystem,
    spec: &ConstraintSpec,
    n_steps: usize,
    m_forecast: &[DVector<f64>],
    h_now: &DVector<f64>,
) -> Result<HorizonData, LtiError> {
    let (n, m, p) = (sys.state_dim(), sys.input_dim(), sys.uncertainty_dim());
    if n_steps == 0 {
        return Err(LtiError::EmptyHorizon);
    }
    if spec.s_mat.ncols() != m {
        return Err(shape_err(
            "S",
            format!("{m} cols"),
            format!("{} cols", spec.s_mat.ncols()),
        ));
    }
    if spec.m_mat.ncols() != m {
        return Err(shape_err(
            "M",
            format!("{m} cols"),
            format!("{} cols", spec.m_mat.ncols()),
        ));
    }
    if spec.f_mat.ncols() != p {
        return Err(shape_err(
            "F",
            format!("{p} cols"),
            format!("{} cols", spec.f_mat.ncols()),
        ));
    }
    if spec.g_mat.ncols() != n {
        return Err(shape_err(
            "G",
            format!("{n} cols"),
            format!("{} cols", spec.g_mat.ncols()),
        ));
    }
    if m_forecast.len() != n_steps {
        return Err(shape_err(
            "m_forecast",
            format!("{n_steps} vectors"),
            format!("{}", m_forecast.len()),
        ));
    }
    let d = spec.coupling_rows();
    for (k, mk) in m_forecast.iter().enumerate() {
        if mk.len() != d {
            return Err(shape_err(
                "m_forecast entry",
                format!("{d} entries"),
                format!("{} at step {k}", mk.len()),
            ));
        }
    }
    let r = spec.state_rows();
    if h_now.len() != r {
        return Err(shape_err(
            "h",
            format!("{r} entries"),
            format!("{}", h_now.len()),
        ));
    }
    for (i, &hi) in h_now.iter().enumerate() {
        if hi > 0.0 {
            return Err(LtiError::PositiveRelaxation {
                index: i,
                value: hi,
            });
        }
    }

    // Powers A^1 .. A^N.
    let mut powers = Vec::with_capacity(n_steps + 1);
    powers.push(DMatrix::<f64>::identity(n, n));
    for k in 1..=n_steps {
        let next = &powers[k - 1] * sys.a();
        powers.push(next);
    }

    let mut stacked_a = DMatrix::<f64>::zeros(n_steps * n, n);
    for k in 1..=n_steps {
        stacked_a
            .view_mut(((k - 1) * n, 0), (n, n))
            .copy_from(&powers[k]);
    }

    let mut stacked_b = DMatrix::<f64>::zeros(n_steps * n, n_steps * m);
    let mut stacked_e = DMatrix::<f64>::zeros(n_steps * n, n_steps * p);
    for k in 1..=n_steps {
        for i in 0..k {
            let ab = &powers[k - 1 - i] * sys.b();
            stacked_b
                .view_mut(((k - 1) * n, i * m), (n, m))
                .copy_from(&ab);
            let ae = &powers[k - 1 - i] * sys.e();
            stacked_e
                .view_mut(((k - 1) * n, i * p), (n, p))
                .copy_from(&ae);
        }
    }

    let q = spec.input_rows();
    let mut stacked_s = DMatrix::<f64>::zeros(n_steps * q, n_steps * m);
    let mut stacked_s_vec = DVector::<f64>::zeros(n_steps * q);
    for k in 0..n_steps {
        stacked_s
            .view_mut((k * q, k * m), (q, m))
            .copy_from(&spec.s_mat);
        stacked_s_vec.rows_mut(k * q, q).copy_from(&spec.s_vec);
    }

    let mut stacked_m = DMatrix::<f64>::zeros(n_steps * d, n_steps * m);
    let mut coupling_rhs = DVector::<f64>::zeros(n_steps * d);
    for k in 0..n_steps {
        stacked_m
            .view_mut((k * d, k * m), (d, m))
            .copy_from(&spec.m_mat);
        coupling_rhs.rows_mut(k * d, d).copy_from(&m_forecast[k]);
    }

    let mut stacked_g = DMatrix::<f64>::zeros(n_steps * r, n_steps * n);
    let mut stacked_g_vec = DVector::<f64>::zeros(n_steps * r);
    let mut stacked_h = DVector::<f64>::zeros(n_steps * r);
    for k in 0..n_steps {
        stacked_g
            .view_mut((k * r, k * n), (r, n))
            .copy_from(&spec.g_mat);
        stacked_g_vec.rows_mut(k * r, r).copy_from(&spec.g_vec);
        stacked_h.rows_mut(k * r, r).copy_from(h_now);
    }

    Ok(HorizonData {
        horizon_n: n_steps,
        stacked_a,
        stacked_b,
        stacked_e,
        stacked_s,
        stacked_s_vec,
        stacked_m,
        coupling_rhs,
        stacked_g,
        stacked_g_vec,
        stacked_h,
        terminal_lb: spec.terminal_lb.clone(),
        n,
        m,
    })
}

/// Propagates the nominal dynamics (`w = 0`) through the stacked form,
/// returning the predicted states `x(t+1|t) .. x(t+N|t)`.
pub fn propagate_nominal(
    data: &HorizonData,
    x0: &DVector<f64>,
    u_seq: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, LtiError> {
    let (n, m) = (data.n, data.m);
    if x0.len() != n {
        return Err(shape_err(
            "x0",
            format!("{n} entries"),
            format!("{}", x0.len()),
        ));
    }
    if u_seq.len() != data.horizon_n {
        return Err(shape_err(
            "u_seq",
            format!("{} vectors", data.horizon_n),
            format!("{}", u_seq.len()),
        ));
    }
    let mut u_flat = DVector::<f64>::zeros(data.horizon_n * m);
    for (k, uk) in u_seq.iter().enumerate() {
        if uk.len() != m {
            return Err(shape_err(
                "u_seq entry",
                format!("{m} entries"),
                format!("{} at step {k}", uk.len()),
            ));
        }
        u_flat.rows_mut(k * m, m).copy_from(uk);
    }
    let x_flat = &data.stacked_a * x0 + &data.stacked_b * &u_flat;
    Ok((0..data.horizon_n)
        .map(|k| x_flat.rows(k * n, n).into_owned())
        .collect())
}
