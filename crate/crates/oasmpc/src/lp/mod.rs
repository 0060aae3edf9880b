//! Standard-form linear programs with epigraph helpers and a built-in
//! dense solver.
//!
//! The representation covers everything the nominal controller needs:
//! linear cost, equality and `<=` inequality rows, and per-variable bounds
//! with infinities allowed. Weighted max and absolute-value objective terms
//! are added through epigraph reformulation so the problem stays an LP.

mod simplex;

use thiserror::Error;

/// Absolute feasibility tolerance, applied after unit row scaling.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("variable index {index} out of range (LP has {len} variables)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("epigraph term set is empty")]
    EmptyTerms,
    #[error("weight must be nonnegative, got {0}")]
    NegativeWeight(f64),
    #[error("cost coefficient must be finite, got {0}")]
    NonFiniteCost(f64),
    #[error("coefficient must be finite, got {0}")]
    NonFiniteCoefficient(f64),
    #[error("lower bound {lower} exceeds upper bound {upper}")]
    BoundOrder { lower: f64, upper: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub name: String,
    pub coeffs: Vec<(u32, f64)>,
    pub rhs: f64,
}

/// A linear program in standard form: minimize `cost . z` subject to
/// equality rows, `<=` rows, and variable bounds.
///
/// Variables and rows carry semantic labels so solver diagnostics and the
/// plain-text dump stay readable.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub(crate) names: Vec<String>,
    pub(crate) cost: Vec<f64>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) eq_rows: Vec<Row>,
    pub(crate) le_rows: Vec<Row>,
}

/// Solver outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible { violated: Vec<ViolatedRow> },
    Unbounded,
    NumericFailure { iterations: u64, worst_residual: f64 },
}

/// A row left unsatisfied by the feasibility phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolatedRow {
    pub name: String,
    pub residual: f64,
}

/// Result of a solve. `primal` and `objective` are meaningful only when
/// `status` is [`LpStatus::Optimal`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        matches!(self.status, LpStatus::Optimal)
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_eq_rows(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn num_le_rows(&self) -> usize {
        self.le_rows.len()
    }

    pub fn var_name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn cost_of(&self, index: usize) -> f64 {
        self.cost[index]
    }

    pub fn bounds_of(&self, index: usize) -> (f64, f64) {
        (self.lower[index], self.upper[index])
    }

    /// Adds a variable and returns its index.
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> Result<usize, LpError> {
        if !cost.is_finite() {
            return Err(LpError::NonFiniteCost(cost));
        }
        if lower > upper {
            return Err(LpError::BoundOrder { lower, upper });
        }
        self.names.push(name.into());
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        Ok(self.cost.len() - 1)
    }

    pub fn add_to_cost(&mut self, index: usize, delta: f64) -> Result<(), LpError> {
        self.check_index(index)?;
        if !delta.is_finite() {
            return Err(LpError::NonFiniteCost(delta));
        }
        self.cost[index] += delta;
        Ok(())
    }

    /// Intersects the variable's bound interval with `[lower, upper]`.
    pub fn tighten_bounds(&mut self, index: usize, lower: f64, upper: f64) -> Result<(), LpError> {
        self.check_index(index)?;
        let lo = self.lower[index].max(lower);
        let hi = self.upper[index].min(upper);
        if lo > hi {
            return Err(LpError::BoundOrder {
                lower: lo,
                upper: hi,
            });
        }
        self.lower[index] = lo;
        self.upper[index] = hi;
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<(), LpError> {
        if index >= self.cost.len() {
            return Err(LpError::IndexOutOfRange {
                index,
                len: self.cost.len(),
            });
        }
        Ok(())
    }

    fn check_row(&self, coeffs: &[(usize, f64)]) -> Result<Vec<(u32, f64)>, LpError> {
        let mut out = Vec::with_capacity(coeffs.len());
        for &(j, v) in coeffs {
            self.check_index(j)?;
            if !v.is_finite() {
                return Err(LpError::NonFiniteCoefficient(v));
            }
            if v != 0.0 {
                out.push((j as u32, v));
            }
        }
        Ok(out)
    }

    /// Adds an equality row `coeffs . z = rhs`.
    pub fn add_eq(
        &mut self,
        name: impl Into<String>,
        coeffs: &[(usize, f64)],
        rhs: f64,
    ) -> Result<(), LpError> {
        let coeffs = self.check_row(coeffs)?;
        self.eq_rows.push(Row {
            name: name.into(),
            coeffs,
            rhs,
        });
        Ok(())
    }

    /// Adds an inequality row `coeffs . z <= rhs`.
    pub fn add_le(
        &mut self,
        name: impl Into<String>,
        coeffs: &[(usize, f64)],
        rhs: f64,
    ) -> Result<(), LpError> {
        let coeffs = self.check_row(coeffs)?;
        self.le_rows.push(Row {
            name: name.into(),
            coeffs,
            rhs,
        });
        Ok(())
    }

    /// Adds an epigraph auxiliary `P >= z_i` for every `i` in `terms`,
    /// optionally floored at zero, with `weight * P` added to the cost.
    ///
    /// With positive weight, minimizing drives `P` to the (floored) maximum
    /// of the terms. Returns the auxiliary's index.
    pub fn add_max_epigraph(
        &mut self,
        name: impl Into<String>,
        terms: &[usize],
        weight: f64,
        floor_at_zero: bool,
    ) -> Result<usize, LpError> {
        if terms.is_empty() {
            return Err(LpError::EmptyTerms);
        }
        if weight < 0.0 {
            return Err(LpError::NegativeWeight(weight));
        }
        for &j in terms {
            self.check_index(j)?;
        }
        let name = name.into();
        let lower = if floor_at_zero { 0.0 } else { f64::NEG_INFINITY };
        let aux = self.add_var(name.clone(), lower, f64::INFINITY, weight)?;
        for &j in terms {
            self.add_le(
                format!("{name}>={}", self.names[j]),
                &[(j, 1.0), (aux, -1.0)],
                0.0,
            )?;
        }
        Ok(aux)
    }

    /// Adds an epigraph auxiliary `a >= z_index`, `a >= -z_index` with
    /// `weight * a` added to the cost; at optimum with positive weight,
    /// `a = |z_index|`. Returns the auxiliary's index.
    pub fn add_abs_epigraph(&mut self, index: usize, weight: f64) -> Result<usize, LpError> {
        self.check_index(index)?;
        if weight < 0.0 {
            return Err(LpError::NegativeWeight(weight));
        }
        let name = format!("abs({})", self.names[index]);
        let aux = self.add_var(name.clone(), 0.0, f64::INFINITY, weight)?;
        self.add_le(format!("{name}+"), &[(index, 1.0), (aux, -1.0)], 0.0)?;
        self.add_le(format!("{name}-"), &[(index, -1.0), (aux, -1.0)], 0.0)?;
        Ok(aux)
    }

    /// Plain-text standard form, one constraint per line, for external
    /// cross-checking.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let term = |j: u32, v: f64| format!("{:+} {}", v, self.names[j as usize]);
        let mut obj = String::from("min:");
        for (j, &c) in self.cost.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(obj, " {}", term(j as u32, c));
            }
        }
        out.push_str(&obj);
        out.push('\n');
        for row in &self.eq_rows {
            let lhs: Vec<String> = row.coeffs.iter().map(|&(j, v)| term(j, v)).collect();
            let _ = writeln!(out, "{}: {} = {}", row.name, lhs.join(" "), row.rhs);
        }
        for row in &self.le_rows {
            let lhs: Vec<String> = row.coeffs.iter().map(|&(j, v)| term(j, v)).collect();
            let _ = writeln!(out, "{}: {} <= {}", row.name, lhs.join(" "), row.rhs);
        }
        for j in 0..self.num_vars() {
            let _ = writeln!(
                out,
                "bound {}: {} <= {} <= {}",
                self.names[j], self.lower[j], self.names[j], self.upper[j]
            );
        }
        out
    }
}

/// Solves the LP with the built-in bounded-variable revised simplex.
///
/// Deterministic: Dantzig pricing with fixed tie-breaking, falling back to
/// Bland's rule under degenerate stalling. Infeasibility and unboundedness
/// are reported in the status, never silently.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    simplex::solve(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn min_x_above_one() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0).unwrap();
        lp.add_le("x>=1", &[(x, -1.0)], -1.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[x], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn max_x_below_five() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 5.0, -1.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[x], 5.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_face_objective_only() {
        // min x+y s.t. x+y >= 2, x,y >= 0: any optimal vertex gives 2.
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0).unwrap();
        let y = lp.add_var("y", 0.0, f64::INFINITY, 1.0).unwrap();
        lp.add_le("x+y>=2", &[(x, -1.0), (y, -1.0)], -2.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn max_epigraph_over_fixed_terms() {
        let mut lp = LinearProgram::new();
        let vals = [3.0, 7.0, 5.0];
        let vars: Vec<usize> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| lp.add_var(format!("z{i}"), v, v, 0.0).unwrap())
            .collect();
        let aux = lp.add_max_epigraph("peak", &vars, 1.0, true).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[aux], 7.0, epsilon = 1e-9);
    }

    #[test]
    fn max_epigraph_floor_binds_on_negative_terms() {
        let mut lp = LinearProgram::new();
        let vars: Vec<usize> = [-3.0, -7.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| lp.add_var(format!("z{i}"), v, v, 0.0).unwrap())
            .collect();
        let aux = lp.add_max_epigraph("peak", &vars, 1.0, true).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[aux], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn max_epigraph_singleton_equals_term() {
        let mut lp = LinearProgram::new();
        let z = lp.add_var("z", 4.5, 4.5, 0.0).unwrap();
        let aux = lp.add_max_epigraph("peak", &[z], 1.0, false).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[aux], 4.5, epsilon = 1e-9);
    }

    #[test]
    fn max_epigraph_rejects_empty_terms() {
        let mut lp = LinearProgram::new();
        assert!(matches!(
            lp.add_max_epigraph("peak", &[], 1.0, true),
            Err(LpError::EmptyTerms)
        ));
    }

    #[test]
    fn abs_epigraph_of_negative_value() {
        let mut lp = LinearProgram::new();
        let z = lp.add_var("z", -4.0, -4.0, 0.0).unwrap();
        let aux = lp.add_abs_epigraph(z, 1.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[aux], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn abs_epigraph_of_zero() {
        let mut lp = LinearProgram::new();
        let z = lp.add_var("z", 0.0, 0.0, 0.0).unwrap();
        let aux = lp.add_abs_epigraph(z, 1.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[aux], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn abs_epigraph_rejects_bad_index() {
        let mut lp = LinearProgram::new();
        assert!(matches!(
            lp.add_abs_epigraph(3, 1.0),
            Err(LpError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn abs_objective_matches_grid_enumeration() {
        // min |x| + 2|y| s.t. x + y >= 0.5, x,y in [-1,1]; optimum x=0.5, y=0
        // lies on the 0.01 grid, so grid search and LP agree to 1e-6.
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", -1.0, 1.0, 0.0).unwrap();
        let y = lp.add_var("y", -1.0, 1.0, 0.0).unwrap();
        lp.add_le("x+y>=0.5", &[(x, -1.0), (y, -1.0)], -0.5).unwrap();
        lp.add_abs_epigraph(x, 1.0).unwrap();
        lp.add_abs_epigraph(y, 2.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());

        let mut best = f64::INFINITY;
        for i in 0..=200 {
            let xv = -1.0 + 0.01 * i as f64;
            for j in 0..=200 {
                let yv = -1.0 + 0.01 * j as f64;
                if xv + yv >= 0.5 {
                    best = best.min(xv.abs() + 2.0 * yv.abs());
                }
            }
        }
        assert_abs_diff_eq!(sol.objective, best, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_reports_violated_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0).unwrap();
        lp.add_le("x<=1", &[(x, 1.0)], 1.0).unwrap();
        lp.add_le("x>=2", &[(x, -1.0)], -2.0).unwrap();
        let sol = solve_lp(&lp);
        match sol.status {
            LpStatus::Infeasible { violated } => {
                assert!(!violated.is_empty());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 0.0, f64::INFINITY, -1.0).unwrap();
        let sol = solve_lp(&lp);
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_respected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 2.0).unwrap();
        let y = lp.add_var("y", 0.0, f64::INFINITY, 1.0).unwrap();
        lp.add_eq("x+y=3", &[(x, 1.0), (y, 1.0)], 3.0).unwrap();
        let sol = solve_lp(&lp);
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[x], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.primal[y], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn solves_are_bitwise_deterministic() {
        let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(11));
        let a = solve_lp(&lp);
        let b = solve_lp(&lp);
        assert_eq!(a.status, b.status);
        assert_eq!(a.primal.len(), b.primal.len());
        for (x, y) in a.primal.iter().zip(b.primal.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reported_objective_matches_cost_dot_primal() {
        let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(3));
        let sol = solve_lp(&lp);
        if sol.is_optimal() {
            let direct: f64 = (0..lp.num_vars()).map(|j| lp.cost_of(j) * sol.primal[j]).sum();
            let denom = direct.abs().max(1.0);
            assert!((direct - sol.objective).abs() / denom < 1e-9);
        }
    }

    fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
        let nv = rng.gen_range(2..=6);
        let nr = rng.gen_range(1..=8);
        let mut lp = LinearProgram::new();
        for j in 0..nv {
            let lo = rng.gen_range(-5.0..0.0);
            let hi = rng.gen_range(0.0..5.0);
            lp.add_var(format!("x{j}"), lo, hi, rng.gen_range(-2.0..2.0))
                .unwrap();
        }
        for i in 0..nr {
            let coeffs: Vec<(usize, f64)> =
                (0..nv).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
            lp.add_le(format!("r{i}"), &coeffs, rng.gen_range(-2.0..5.0))
                .unwrap();
        }
        lp
    }

    /// Vertex-enumeration oracle for boxed LPs with few variables: tries
    /// every choice of `nv` active constraints among rows and bounds.
    fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
        use nalgebra::{DMatrix, DVector};
        let nv = lp.num_vars();
        // Candidate active constraints: (normal, offset) pairs a.x = b.
        let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in &lp.le_rows {
            let mut a = vec![0.0; nv];
            for &(j, v) in &row.coeffs {
                a[j as usize] = v;
            }
            cands.push((a, row.rhs));
        }
        for j in 0..nv {
            let mut a = vec![0.0; nv];
            a[j] = 1.0;
            cands.push((a.clone(), lp.lower[j]));
            cands.push((a, lp.upper[j]));
        }
        let idx: Vec<usize> = (0..cands.len()).collect();
        let mut best: Option<f64> = None;
        let mut combo = vec![0usize; nv];
        fn rec(
            idx: &[usize],
            k: usize,
            start: usize,
            combo: &mut Vec<usize>,
            f: &mut dyn FnMut(&[usize]),
        ) {
            if k == 0 {
                f(combo);
                return;
            }
            for i in start..=idx.len().saturating_sub(k) {
                combo.push(idx[i]);
                rec(idx, k - 1, i + 1, combo, f);
                combo.pop();
            }
        }
        combo.clear();
        let mut visit = |active: &[usize]| {
            let a = DMatrix::from_fn(nv, nv, |r, c| cands[active[r]].0[c]);
            let b = DVector::from_fn(nv, |r, _| cands[active[r]].1);
            let lu = a.lu();
            let Some(x) = lu.solve(&b) else { return };
            // Feasibility of the candidate vertex.
            for j in 0..nv {
                if x[j] < lp.lower[j] - 1e-9 || x[j] > lp.upper[j] + 1e-9 {
                    return;
                }
            }
            for row in &lp.le_rows {
                let lhs: f64 = row.coeffs.iter().map(|&(j, v)| v * x[j as usize]).sum();
                if lhs > row.rhs + 1e-9 {
                    return;
                }
            }
            let obj: f64 = (0..nv).map(|j| lp.cost[j] * x[j]).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        };
        rec(&idx, nv, 0, &mut combo, &mut visit);
        best
    }

    #[test]
    fn objective_matches_vertex_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut optimal_seen = 0;
        for _ in 0..30 {
            let lp = random_lp(&mut rng);
            let sol = solve_lp(&lp);
            let oracle = vertex_oracle(&lp);
            match (&sol.status, oracle) {
                (LpStatus::Optimal, Some(best)) => {
                    optimal_seen += 1;
                    assert!(
                        (sol.objective - best).abs() < 1e-7,
                        "solver {} vs oracle {best}",
                        sol.objective
                    );
                }
                (LpStatus::Infeasible { .. }, None) => {}
                (status, oracle) => panic!("status {status:?} vs oracle {oracle:?}"),
            }
        }
        assert!(optimal_seen >= 10, "too few optimal instances exercised");
    }

    proptest::proptest! {
        // Epigraph auxiliaries recover max and absolute value for any
        // fixed operands.
        #[test]
        fn epigraph_recovers_max_and_abs(
            vals in proptest::collection::vec(-10.0f64..10.0, 1..5),
            z in -10.0f64..10.0,
            floor in proptest::bool::ANY,
        ) {
            let mut lp = LinearProgram::new();
            let vars: Vec<usize> = vals
                .iter()
                .enumerate()
                .map(|(i, &v)| lp.add_var(format!("z{i}"), v, v, 0.0).unwrap())
                .collect();
            let zv = lp.add_var("z", z, z, 0.0).unwrap();
            let peak = lp.add_max_epigraph("peak", &vars, 1.0, floor).unwrap();
            let abs = lp.add_abs_epigraph(zv, 1.0).unwrap();
            let sol = solve_lp(&lp);
            proptest::prop_assert!(sol.is_optimal());
            let mut expected = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if floor {
                expected = expected.max(0.0);
            }
            proptest::prop_assert!((sol.primal[peak] - expected).abs() <= 1e-7);
            proptest::prop_assert!((sol.primal[abs] - z.abs()).abs() <= 1e-7);
        }
    }

    #[test]
    fn dump_lists_every_constraint() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 2.0, 1.0).unwrap();
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 0.0).unwrap();
        lp.add_eq("bal", &[(x, 1.0), (y, -1.0)], 0.5).unwrap();
        lp.add_le("cap", &[(x, 1.0)], 1.5).unwrap();
        let text = lp.dump();
        assert!(text.contains("bal:"));
        assert!(text.contains("cap:"));
        assert!(text.lines().count() >= 4);
    }
}
