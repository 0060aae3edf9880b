//! Nominal MPC problem construction and per-step solving.
//!
//! Each step builds an LP over the horizon input sequence: states are
//! eliminated through the stacked dynamics, hard input rows become variable
//! bounds where they are singletons, coupling equalities take the forecast
//! right-hand side, relaxed state rows use `g - h(t)`, and the objective is
//! assembled from linear, weighted-max (demand peak), and absolute-value
//! terms. State constraints are imposed for the predicted steps `1..=N`
//! only, never for the initial state.

use nalgebra::DVector;
use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, ViolatedRow};
use crate::lti::{propagate_nominal, HorizonData, LtiError};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("objective inconsistent with horizon: {0}")]
    BadObjective(String),
    #[error("initial state has {got} entries, system expects {expected}")]
    BadInitialState { expected: usize, got: usize },
    #[error("nominal problem infeasible; violated rows: {}", format_violations(.0))]
    Infeasible(Vec<ViolatedRow>),
    #[error("nominal problem unbounded")]
    Unbounded,
    #[error("LP solver numeric failure after {iterations} iterations (worst residual {worst_residual:.3e})")]
    Numeric { iterations: u64, worst_residual: f64 },
}

fn format_violations(rows: &[ViolatedRow]) -> String {
    rows.iter()
        .map(|r| format!("{} (residual {:.3e})", r.name, r.residual))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A weighted peak (max) term over one input component at a set of
/// horizon steps.
#[derive(Debug, Clone)]
pub struct PeakGroup {
    pub label: String,
    pub input_index: usize,
    pub steps: Vec<usize>,
    pub rate: f64,
    pub floor_at_zero: bool,
}

/// LP-representable objective: per-variable linear weights, absolute-value
/// weights, peak groups, and a constant offset.
///
/// Weight vectors are indexed `step * m + input`, matching the flattened
/// horizon input layout.
#[derive(Debug, Clone, Default)]
pub struct ObjectiveSpec {
    pub linear_weights: Vec<f64>,
    pub abs_weights: Vec<f64>,
    pub peak_groups: Vec<PeakGroup>,
    pub constant_offset: f64,
}

impl ObjectiveSpec {
    /// An all-zero objective for a horizon of `n_steps` steps of `m` inputs.
    pub fn zeros(n_steps: usize, m: usize) -> Self {
        Self {
            linear_weights: vec![0.0; n_steps * m],
            abs_weights: vec![0.0; n_steps * m],
            peak_groups: Vec::new(),
            constant_offset: 0.0,
        }
    }

    fn validate(&self, n_steps: usize, m: usize) -> Result<(), MpcError> {
        let len = n_steps * m;
        if self.linear_weights.len() != len || self.abs_weights.len() != len {
            return Err(MpcError::BadObjective(format!(
                "weight vectors must have {len} entries, got {} linear / {} abs",
                self.linear_weights.len(),
                self.abs_weights.len()
            )));
        }
        for g in &self.peak_groups {
            if g.rate < 0.0 {
                return Err(MpcError::BadObjective(format!(
                    "peak group {} has negative rate {}",
                    g.label, g.rate
                )));
            }
            if g.input_index >= m {
                return Err(MpcError::BadObjective(format!(
                    "peak group {} indexes input {} of {m}",
                    g.label, g.input_index
                )));
            }
            if g.steps.iter().any(|&k| k >= n_steps) {
                return Err(MpcError::BadObjective(format!(
                    "peak group {} references a step beyond the horizon",
                    g.label
                )));
            }
        }
        Ok(())
    }
}

/// Result of one nominal solve: the first optimal input (the only one a
/// closed-loop consumer implements), the full plan, and predictions.
#[derive(Debug, Clone)]
pub struct MpcStepResult {
    pub first_input: DVector<f64>,
    pub planned_inputs: Vec<DVector<f64>>,
    pub predicted_states: Vec<DVector<f64>>,
    pub objective: f64,
}

/// Assembles the nominal problem as an LP over the horizon inputs plus
/// epigraph auxiliaries.
pub fn build_nominal_problem(
    data: &HorizonData,
    objective: &ObjectiveSpec,
    x0: &DVector<f64>,
) -> Result<LinearProgram, MpcError> {
    let n = data.state_dim();
    let m = data.input_dim();
    let big_n = data.horizon_n;
    if x0.len() != n {
        return Err(MpcError::BadInitialState {
            expected: n,
            got: x0.len(),
        });
    }
    objective.validate(big_n, m)?;

    let mut lp = LinearProgram::new();
    for k in 0..big_n {
        for j in 0..m {
            lp.add_var(
                format!("u{}({k})", j + 1),
                f64::NEG_INFINITY,
                f64::INFINITY,
                objective.linear_weights[k * m + j],
            )?;
        }
    }

    // Hard input rows. Singleton rows are variable bounds; the rest become
    // inequality rows.
    let nu = big_n * m;
    for i in 0..data.stacked_s.nrows() {
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for j in 0..nu {
            let v = data.stacked_s[(i, j)];
            if v != 0.0 {
                nz.push((j, v));
            }
        }
        let rhs = data.stacked_s_vec[i];
        match nz.as_slice() {
            [] => {
                if rhs < 0.0 {
                    // A vacuous row that can never hold.
                    lp.add_le(format!("input[{i}]"), &[], rhs)?;
                }
            }
            [(j, v)] => {
                if *v > 0.0 {
                    lp.tighten_bounds(*j, f64::NEG_INFINITY, rhs / v)?;
                } else {
                    lp.tighten_bounds(*j, rhs / v, f64::INFINITY)?;
                }
            }
            _ => lp.add_le(format!("input[{i}]"), &nz, rhs)?,
        }
    }

    // Coupling equalities with forecast right-hand sides.
    for i in 0..data.stacked_m.nrows() {
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for j in 0..nu {
            let v = data.stacked_m[(i, j)];
            if v != 0.0 {
                nz.push((j, v));
            }
        }
        lp.add_eq(format!("couple[{i}]"), &nz, data.coupling_rhs[i])?;
    }

    // Relaxed state rows for k = 1..=N: (G B) u <= g - h - G A^k x0.
    let gb = &data.stacked_g * &data.stacked_b;
    let gax = &data.stacked_g * (&data.stacked_a * x0);
    let r = data.stacked_g_vec.len() / big_n;
    for i in 0..gb.nrows() {
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for j in 0..nu {
            let v = gb[(i, j)];
            if v != 0.0 {
                nz.push((j, v));
            }
        }
        let rhs = data.stacked_g_vec[i] - data.stacked_h[i] - gax[i];
        lp.add_le(format!("state[k={},{}]", i / r + 1, i % r), &nz, rhs)?;
    }

    // Terminal lower bound on x(t+N|t).
    if let Some(x_hat) = &data.terminal_lb {
        let last = (big_n - 1) * n;
        for d in 0..n {
            let mut nz: Vec<(usize, f64)> = Vec::new();
            for j in 0..nu {
                let v = data.stacked_b[(last + d, j)];
                if v != 0.0 {
                    nz.push((j, -v));
                }
            }
            let ax = (0..n)
                .map(|c| data.stacked_a[(last + d, c)] * x0[c])
                .sum::<f64>();
            lp.add_le(format!("terminal[{d}]"), &nz, ax - x_hat[d])?;
        }
    }

    // Absolute-value and peak objective terms.
    for k in 0..big_n {
        for j in 0..m {
            let w = objective.abs_weights[k * m + j];
            if w != 0.0 {
                lp.add_abs_epigraph(k * m + j, w)?;
            }
        }
    }
    for g in &objective.peak_groups {
        let terms: Vec<usize> = g.steps.iter().map(|&k| k * m + g.input_index).collect();
        lp.add_max_epigraph(g.label.clone(), &terms, g.rate, g.floor_at_zero)?;
    }

    Ok(lp)
}

/// Solves the nominal problem for one step and extracts the plan.
///
/// Infeasibility is a hard error carrying the violated-row report: with a
/// correctly tuned configuration the problem is feasible by design, so an
/// infeasible step must halt the run loudly rather than be relaxed.
pub fn solve_step(
    data: &HorizonData,
    objective: &ObjectiveSpec,
    x0: &DVector<f64>,
) -> Result<MpcStepResult, MpcError> {
    let lp = build_nominal_problem(data, objective, x0)?;
    let sol = solve_lp(&lp);
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible { violated } => return Err(MpcError::Infeasible(violated)),
        LpStatus::Unbounded => return Err(MpcError::Unbounded),
        LpStatus::NumericFailure {
            iterations,
            worst_residual,
        } => {
            return Err(MpcError::Numeric {
                iterations,
                worst_residual,
            })
        }
    }
    let m = data.input_dim();
    let planned_inputs: Vec<DVector<f64>> = (0..data.horizon_n)
        .map(|k| DVector::from_fn(m, |j, _| sol.primal[k * m + j]))
        .collect();
    let predicted_states = propagate_nominal(data, x0, &planned_inputs)?;
    Ok(MpcStepResult {
        first_input: planned_inputs[0].clone(),
        planned_inputs,
        predicted_states,
        objective: sol.objective + objective.constant_offset,
    })
}
