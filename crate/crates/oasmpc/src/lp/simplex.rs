//! Bounded-variable revised simplex, two phases, dense basis inverse.
//!
//! Pricing is Dantzig (most violated reduced cost) with fixed tie-breaking
//! by lowest column index; a run of degenerate pivots switches to Bland's
//! rule until progress resumes, which guards against cycling while keeping
//! the method deterministic. Rows are scaled to unit max coefficient before
//! solving; the feasibility tolerance applies in that scaled space.

use super::{LinearProgram, LpSolution, LpStatus, Row, ViolatedRow, FEASIBILITY_TOL};

const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const DEGEN_EPS: f64 = 1e-11;
const RATIO_TIE: f64 = 1e-10;
const REFACTOR_EVERY: u64 = 256;
const BLAND_AFTER: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VStat {
    Basic,
    AtLower,
    AtUpper,
    /// Free variable held nonbasic at zero.
    FreeZero,
}

struct Solver<'a> {
    m: usize,
    nv: usize,
    n_slack: usize,
    n_art: usize,
    /// Scaled sparse columns of the structural variables.
    cols: Vec<Vec<(u32, f64)>>,
    art_row: Vec<u32>,
    art_sign: Vec<f64>,
    rhs: Vec<f64>,
    scale: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    stat: Vec<VStat>,
    basis: Vec<u32>,
    binv: Vec<f64>,
    row_names: Vec<&'a str>,
    y: Vec<f64>,
    w: Vec<f64>,
    iterations: u64,
    pivots_since_refactor: u64,
    degenerate_run: u32,
    bland: bool,
}

enum StepOutcome {
    Optimal,
    Progress,
    Unbounded,
    Numeric,
}

pub(crate) fn solve(lp: &LinearProgram) -> LpSolution {
    let mut s = Solver::new(lp);

    // Phase 1: minimize total artificial mass.
    if s.n_art > 0 {
        let mut p1_cost = vec![0.0; s.total_cols()];
        for a in 0..s.n_art {
            p1_cost[s.nv + s.n_slack + a] = 1.0;
        }
        let saved = std::mem::replace(&mut s.cost, p1_cost);
        match s.iterate() {
            StepOutcome::Optimal => {}
            StepOutcome::Unbounded | StepOutcome::Numeric => {
                return s.numeric_failure();
            }
            StepOutcome::Progress => unreachable!(),
        }
        let infeas: f64 = (0..s.n_art).map(|a| s.x[s.nv + s.n_slack + a]).sum();
        if infeas > FEASIBILITY_TOL {
            return LpSolution {
                status: LpStatus::Infeasible {
                    violated: s.violated_rows(),
                },
                primal: vec![],
                objective: f64::NAN,
            };
        }
        s.drive_out_artificials();
        // Pin artificials at zero for phase 2.
        for a in 0..s.n_art {
            let j = s.nv + s.n_slack + a;
            s.lb[j] = 0.0;
            s.ub[j] = 0.0;
            s.x[j] = 0.0;
        }
        s.cost = saved;
    }

    // Phase 2: the real objective.
    match s.iterate() {
        StepOutcome::Optimal => {}
        StepOutcome::Unbounded => {
            return LpSolution {
                status: LpStatus::Unbounded,
                primal: vec![],
                objective: f64::NAN,
            };
        }
        StepOutcome::Numeric => return s.numeric_failure(),
        StepOutcome::Progress => unreachable!(),
    }

    let worst = s.worst_residual();
    if worst > FEASIBILITY_TOL {
        // One fresh factorization before giving up on accuracy.
        if s.refactor().is_err() {
            return s.numeric_failure();
        }
        if s.worst_residual() > FEASIBILITY_TOL {
            return s.numeric_failure();
        }
    }

    let primal: Vec<f64> = s.x[..s.nv].to_vec();
    let objective = lp
        .cost
        .iter()
        .zip(primal.iter())
        .map(|(c, x)| c * x)
        .sum();
    LpSolution {
        status: LpStatus::Optimal,
        primal,
        objective,
    }
}

impl<'a> Solver<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let nv = lp.num_vars();
        let n_eq = lp.eq_rows.len();
        let n_le = lp.le_rows.len();
        let m = n_eq + n_le;

        let mut scale = vec![1.0; m];
        let mut rhs = vec![0.0; m];
        let mut row_names = Vec::with_capacity(m);
        let all_rows = lp.eq_rows.iter().chain(lp.le_rows.iter());
        for (i, row) in all_rows.enumerate() {
            let mx = row
                .coeffs
                .iter()
                .map(|&(_, v)| v.abs())
                .fold(0.0_f64, f64::max);
            scale[i] = if mx > 0.0 { 1.0 / mx } else { 1.0 };
            rhs[i] = row.rhs * scale[i];
            row_names.push(row.name.as_str());
        }

        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nv];
        let push_row = |cols: &mut Vec<Vec<(u32, f64)>>, i: usize, row: &Row, sc: f64| {
            for &(j, v) in &row.coeffs {
                cols[j as usize].push((i as u32, v * sc));
            }
        };
        for (i, row) in lp.eq_rows.iter().enumerate() {
            push_row(&mut cols, i, row, scale[i]);
        }
        for (k, row) in lp.le_rows.iter().enumerate() {
            push_row(&mut cols, n_eq + k, row, scale[n_eq + k]);
        }

        let mut lb = lp.lower.clone();
        let mut ub = lp.upper.clone();
        let mut cost = lp.cost.clone();
        let mut x = vec![0.0; nv];
        let mut stat = vec![VStat::FreeZero; nv];
        for j in 0..nv {
            if lb[j].is_finite() {
                x[j] = lb[j];
                stat[j] = VStat::AtLower;
            } else if ub[j].is_finite() {
                x[j] = ub[j];
                stat[j] = VStat::AtUpper;
            }
        }
        // Slacks for <= rows.
        for _ in 0..n_le {
            lb.push(0.0);
            ub.push(f64::INFINITY);
            cost.push(0.0);
            x.push(0.0);
            stat.push(VStat::AtLower);
        }

        // Row residuals at the initial nonbasic point decide the crash basis.
        let mut resid = rhs.clone();
        for (j, col) in cols.iter().enumerate() {
            let xj = x[j];
            if xj != 0.0 {
                for &(r, v) in col {
                    resid[r as usize] -= v * xj;
                }
            }
        }

        let mut basis = vec![u32::MAX; m];
        let mut art_row = Vec::new();
        let mut art_sign = Vec::new();
        for i in 0..m {
            let is_le = i >= n_eq;
            if is_le && resid[i] >= 0.0 {
                let slack = nv + (i - n_eq);
                basis[i] = slack as u32;
                stat[slack] = VStat::Basic;
                x[slack] = resid[i];
            } else {
                let sign = if resid[i] < 0.0 { -1.0 } else { 1.0 };
                let a = art_row.len();
                art_row.push(i as u32);
                art_sign.push(sign);
                let j = nv + n_le + a;
                lb.push(0.0);
                ub.push(f64::INFINITY);
                cost.push(0.0);
                x.push(resid[i] * sign);
                stat.push(VStat::Basic);
                basis[i] = j as u32;
            }
        }
        let n_art = art_row.len();

        // Crash basis matrix is diagonal with entries +-1.
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            let j = basis[i] as usize;
            let diag = if j >= nv + n_le {
                art_sign[j - nv - n_le]
            } else {
                1.0
            };
            binv[i * m + i] = diag;
        }

        Solver {
            m,
            nv,
            n_slack: n_le,
            n_art,
            cols,
            art_row,
            art_sign,
            rhs,
            scale,
            lb,
            ub,
            cost,
            x,
            stat,
            basis,
            binv,
            row_names,
            y: vec![0.0; m],
            w: vec![0.0; m],
            iterations: 0,
            pivots_since_refactor: 0,
            degenerate_run: 0,
            bland: false,
        }
    }

    fn total_cols(&self) -> usize {
        self.nv + self.n_slack + self.n_art
    }

    fn n_eq(&self) -> usize {
        self.m - self.n_slack
    }

    fn max_iterations(&self) -> u64 {
        20_000 + 200 * self.m as u64
    }

    /// Runs simplex iterations with the current cost until optimal,
    /// unbounded, or a numeric limit.
    fn iterate(&mut self) -> StepOutcome {
        loop {
            if self.iterations >= self.max_iterations() {
                return StepOutcome::Numeric;
            }
            match self.step() {
                StepOutcome::Progress => continue,
                other => return other,
            }
        }
    }

    fn compute_duals(&mut self) {
        let m = self.m;
        self.y[..m].fill(0.0);
        for i in 0..m {
            let cb = self.cost[self.basis[i] as usize];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (t, &b) in row.iter().enumerate() {
                    self.y[t] += cb * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        if j < self.nv {
            let mut d = self.cost[j];
            for &(r, v) in &self.cols[j] {
                d -= self.y[r as usize] * v;
            }
            d
        } else {
            // Slack: unit column on its row, zero cost.
            let row = self.n_eq() + (j - self.nv);
            -self.y[row]
        }
    }

    /// One pivot (or bound flip). Artificials never re-enter.
    fn step(&mut self) -> StepOutcome {
        self.compute_duals();

        let pricable = self.nv + self.n_slack;
        let mut enter: Option<(usize, f64, f64)> = None; // (col, score, dir)
        for j in 0..pricable {
            let st = self.stat[j];
            if st == VStat::Basic || self.lb[j] == self.ub[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let (score, dir) = match st {
                VStat::AtLower => (-d, 1.0),
                VStat::AtUpper => (d, -1.0),
                VStat::FreeZero => (d.abs(), if d > 0.0 { -1.0 } else { 1.0 }),
                VStat::Basic => unreachable!(),
            };
            if score > DUAL_TOL {
                if self.bland {
                    enter = Some((j, score, dir));
                    break;
                }
                match enter {
                    Some((_, best, _)) if best >= score => {}
                    _ => enter = Some((j, score, dir)),
                }
            }
        }
        let Some((q, _, dir)) = enter else {
            return StepOutcome::Optimal;
        };

        self.ftran(q);

        // Ratio test: smallest step, ties broken toward the largest pivot
        // magnitude and then the lowest row index.
        let gap = self.ub[q] - self.lb[q];
        let mut t_best = if gap.is_finite() { gap } else { f64::INFINITY };
        let mut leave: Option<(usize, bool)> = None; // (row, leaves_at_lower)
        for i in 0..self.m {
            let d = dir * self.w[i];
            let bj = self.basis[i] as usize;
            let (t_i, at_lower) = if d > PIVOT_TOL {
                let l = self.lb[bj];
                if l.is_finite() {
                    (((self.x[bj] - l) / d).max(0.0), true)
                } else {
                    continue;
                }
            } else if d < -PIVOT_TOL {
                let u = self.ub[bj];
                if u.is_finite() {
                    (((u - self.x[bj]) / -d).max(0.0), false)
                } else {
                    continue;
                }
            } else {
                continue;
            };
            if t_i < t_best - RATIO_TIE {
                t_best = t_i;
                leave = Some((i, at_lower));
            } else if t_i < t_best + RATIO_TIE {
                if let Some((prev, _)) = leave {
                    if self.w[i].abs() > self.w[prev].abs() {
                        leave = Some((i, at_lower));
                        t_best = t_best.min(t_i);
                    }
                } else if t_i < t_best {
                    t_best = t_i;
                    leave = Some((i, at_lower));
                }
            }
        }

        if t_best.is_infinite() {
            return StepOutcome::Unbounded;
        }

        self.iterations += 1;
        if t_best <= DEGEN_EPS {
            self.degenerate_run += 1;
            if self.degenerate_run >= BLAND_AFTER {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }

        match leave {
            None => {
                // The entering variable runs to its opposite bound.
                for i in 0..self.m {
                    let bj = self.basis[i] as usize;
                    self.x[bj] -= t_best * dir * self.w[i];
                }
                self.x[q] += dir * t_best;
                self.stat[q] = match self.stat[q] {
                    VStat::AtLower => VStat::AtUpper,
                    VStat::AtUpper => VStat::AtLower,
                    other => other,
                };
                StepOutcome::Progress
            }
            Some((r, at_lower)) => {
                for i in 0..self.m {
                    let bj = self.basis[i] as usize;
                    self.x[bj] -= t_best * dir * self.w[i];
                }
                let leaving = self.basis[r] as usize;
                self.x[leaving] = if at_lower {
                    self.lb[leaving]
                } else {
                    self.ub[leaving]
                };
                self.stat[leaving] = if at_lower {
                    VStat::AtLower
                } else {
                    VStat::AtUpper
                };
                self.x[q] += dir * t_best;
                self.stat[q] = VStat::Basic;
                self.basis[r] = q as u32;
                self.update_binv(r);
                self.pivots_since_refactor += 1;
                if self.pivots_since_refactor >= REFACTOR_EVERY {
                    if self.refactor().is_err() {
                        return StepOutcome::Numeric;
                    }
                }
                StepOutcome::Progress
            }
        }
    }

    /// w = B^-1 * column(q).
    fn ftran(&mut self, q: usize) {
        let m = self.m;
        if q < self.nv {
            self.w[..m].fill(0.0);
            for &(r, v) in &self.cols[q] {
                let r = r as usize;
                for i in 0..m {
                    self.w[i] += self.binv[i * m + r] * v;
                }
            }
        } else if q < self.nv + self.n_slack {
            let r = self.n_eq() + (q - self.nv);
            for i in 0..m {
                self.w[i] = self.binv[i * m + r];
            }
        } else {
            let a = q - self.nv - self.n_slack;
            let r = self.art_row[a] as usize;
            let s = self.art_sign[a];
            for i in 0..m {
                self.w[i] = self.binv[i * m + r] * s;
            }
        }
    }

    /// Product-form update of the dense basis inverse after a pivot on row r.
    fn update_binv(&mut self, r: usize) {
        let m = self.m;
        let piv = self.w[r];
        let inv_piv = 1.0 / piv;
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v *= inv_piv;
        }
        for (i, chunk) in head.chunks_exact_mut(m).enumerate() {
            let f = self.w[i];
            if f != 0.0 {
                for (c, p) in chunk.iter_mut().zip(prow.iter()) {
                    *c -= f * p;
                }
            }
        }
        for (off, chunk) in tail.chunks_exact_mut(m).enumerate() {
            let f = self.w[r + 1 + off];
            if f != 0.0 {
                for (c, p) in chunk.iter_mut().zip(prow.iter()) {
                    *c -= f * p;
                }
            }
        }
    }

    /// Rebuilds the basis inverse from scratch and refreshes basic values.
    fn refactor(&mut self) -> Result<(), ()> {
        let m = self.m;
        self.pivots_since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // Dense basis matrix, column per basic variable.
        let mut bmat = vec![0.0; m * m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let bj = bj as usize;
            if bj < self.nv {
                for &(r, v) in &self.cols[bj] {
                    bmat[(r as usize) * m + i] = v;
                }
            } else if bj < self.nv + self.n_slack {
                let r = self.n_eq() + (bj - self.nv);
                bmat[r * m + i] = 1.0;
            } else {
                let a = bj - self.nv - self.n_slack;
                bmat[(self.art_row[a] as usize) * m + i] = self.art_sign[a];
            }
        }
        // Gauss-Jordan with partial pivoting, inverse accumulated in place.
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = bmat[col * m + col].abs();
            for r in (col + 1)..m {
                let v = bmat[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return Err(());
            }
            if piv_row != col {
                for c in 0..m {
                    bmat.swap(piv_row * m + c, col * m + c);
                    inv.swap(piv_row * m + c, col * m + c);
                }
            }
            let inv_piv = 1.0 / bmat[col * m + col];
            for c in 0..m {
                bmat[col * m + c] *= inv_piv;
                inv[col * m + c] *= inv_piv;
            }
            for r in 0..m {
                if r != col {
                    let f = bmat[r * m + col];
                    if f != 0.0 {
                        for c in 0..m {
                            bmat[r * m + c] -= f * bmat[col * m + c];
                            inv[r * m + c] -= f * inv[col * m + c];
                        }
                    }
                }
            }
        }
        self.binv = inv;

        // Refresh basic values: x_B = B^-1 (b - N x_N).
        let mut adj = self.rhs.clone();
        for j in 0..self.nv {
            if self.stat[j] != VStat::Basic && self.x[j] != 0.0 {
                for &(r, v) in &self.cols[j] {
                    adj[r as usize] -= v * self.x[j];
                }
            }
        }
        // Nonbasic slacks and artificials sit at zero and contribute nothing.
        for i in 0..m {
            let mut acc = 0.0;
            let row = &self.binv[i * m..(i + 1) * m];
            for (t, &b) in row.iter().enumerate() {
                acc += b * adj[t];
            }
            self.x[self.basis[i] as usize] = acc;
        }
        Ok(())
    }

    /// Worst scaled row residual plus bound violation of the current point.
    fn worst_residual(&self) -> f64 {
        let mut resid = vec![0.0; self.m];
        for (j, col) in self.cols.iter().enumerate() {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, v) in col {
                    resid[r as usize] += v * xj;
                }
            }
        }
        for k in 0..self.n_slack {
            resid[self.n_eq() + k] += self.x[self.nv + k];
        }
        for a in 0..self.n_art {
            resid[self.art_row[a] as usize] += self.art_sign[a] * self.x[self.nv + self.n_slack + a];
        }
        let mut worst = 0.0_f64;
        for i in 0..self.m {
            worst = worst.max((resid[i] - self.rhs[i]).abs());
        }
        for j in 0..self.nv {
            if self.lb[j].is_finite() {
                worst = worst.max(self.lb[j] - self.x[j]);
            }
            if self.ub[j].is_finite() {
                worst = worst.max(self.x[j] - self.ub[j]);
            }
        }
        worst
    }

    /// Rows whose artificial is still carrying mass after phase 1.
    fn violated_rows(&self) -> Vec<ViolatedRow> {
        let mut out = Vec::new();
        for a in 0..self.n_art {
            let v = self.x[self.nv + self.n_slack + a];
            if v > 1e-9 {
                let row = self.art_row[a] as usize;
                out.push(ViolatedRow {
                    name: self.row_names[row].to_string(),
                    residual: v / self.scale[row],
                });
            }
        }
        out
    }

    /// Pivots basic zero-valued artificials out where a structural or slack
    /// column can take their place; rows that admit none are redundant and
    /// keep the artificial pinned at zero.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.m {
            let bj = self.basis[i] as usize;
            if bj < self.nv + self.n_slack {
                continue;
            }
            // Row i of B^-1 gives the pivot weights for every candidate.
            let m = self.m;
            let brow: Vec<f64> = self.binv[i * m..(i + 1) * m].to_vec();
            let mut found = None;
            for j in 0..(self.nv + self.n_slack) {
                if self.stat[j] == VStat::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let alpha = if j < self.nv {
                    self.cols[j]
                        .iter()
                        .map(|&(r, v)| brow[r as usize] * v)
                        .sum::<f64>()
                } else {
                    brow[self.n_eq() + (j - self.nv)]
                };
                if alpha.abs() > 1e-7 {
                    found = Some(j);
                    break;
                }
            }
            if let Some(q) = found {
                self.ftran(q);
                let old = self.basis[i] as usize;
                self.x[old] = 0.0;
                self.stat[old] = VStat::AtLower;
                // Degenerate pivot: the artificial sits at zero so basic
                // values are unchanged.
                self.stat[q] = VStat::Basic;
                self.basis[i] = q as u32;
                self.update_binv(i);
                self.pivots_since_refactor += 1;
            }
        }
    }

    fn numeric_failure(&self) -> LpSolution {
        LpSolution {
            status: LpStatus::NumericFailure {
                iterations: self.iterations,
                worst_residual: self.worst_residual(),
            },
            primal: vec![],
            objective: f64::NAN,
        }
    }
}
