//! Desk-scale empirical verification of the convergence results.
//!
//! The ideal-control analysis asks what happens when a controller can force
//! (`p* = 1`) or prevent (`p* = 0`) a violation at will, choosing by the
//! sign of the one-step gain `beta(t)`. Under that policy the distance
//! `Z(t) = |alpha - Y(t)|` decreases monotonically exactly while `Y(t)`
//! stays outside the critical region `kappa(alpha, t)`, an open
//! neighborhood of `alpha` whose width `1/(2t+1)` shrinks to zero, and
//! `Y` converges to `alpha`. The oracle here simulates that policy with
//! exact rational arithmetic so the monotonicity claims can be checked
//! with zero tolerance.

use num_rational::Ratio;
use std::io::Write;
use thiserror::Error;

/// Exact rational scalar used by the oracle. `i128` keeps the
/// cross-multiplied comparisons at `t ~ 10^4` far from overflow.
pub type Rational = Ratio<i128>;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("alpha = {0} outside the open interval (0, 0.5)")]
    AlphaRange(f64),
    #[error("y0 = {0} outside [0, 1]")]
    Y0Range(f64),
    #[error("theorem hypothesis violated: alpha = {alpha} must exceed 1/(2(t0+1)) = {bound} at t0 = {t0}")]
    HypothesisViolated { alpha: f64, bound: f64, t0: u64 },
    #[error("CSV write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// The open interval around `alpha` where even ideal control momentarily
/// increases `|alpha - Y|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRegion {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

/// `kappa(alpha, t)`: lower `(alpha - 1/(2(t+1))) / (1 - 1/(2(t+1)))`,
/// upper `alpha / (1 - 1/(2(t+1)))`; the width simplifies to `1/(2t+1)`.
pub fn critical_region(alpha: f64, t: u64) -> Result<CriticalRegion, TheoryError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(TheoryError::AlphaRange(alpha));
    }
    let half = 1.0 / (2.0 * (t as f64 + 1.0));
    let denom = 1.0 - half;
    Ok(CriticalRegion {
        lower: (alpha - half) / denom,
        upper: alpha / denom,
        width: (alpha - (alpha - half)) / denom,
    })
}

/// Exact end points of `kappa(alpha, t)`.
pub fn critical_region_exact(alpha: Rational, t: u64) -> (Rational, Rational) {
    let t = Rational::from_integer(t as i128);
    let one = Rational::from_integer(1);
    let half = one / (Rational::from_integer(2) * (t + one));
    let denom = one - half;
    ((alpha - half) / denom, alpha / denom)
}

/// One-step gain of forcing a violation:
/// `beta(t) = |alpha - tY/(t+1) - 1/(t+1)| - |alpha - tY/(t+1)|`.
/// Negative means the ideal policy is to violate (`p* = 1`), positive to
/// prevent (`p* = 0`).
pub fn beta(alpha: f64, y: f64, t: u64) -> f64 {
    let t = t as f64;
    let base = alpha - t * y / (t + 1.0);
    (base - 1.0 / (t + 1.0)).abs() - base.abs()
}

fn beta_exact(alpha: Rational, y: Rational, t: u64) -> Rational {
    let t = Rational::from_integer(t as i128);
    let one = Rational::from_integer(1);
    let base = alpha - t * y / (t + one);
    abs(base - one / (t + one)) - abs(base)
}

fn abs(x: Rational) -> Rational {
    if x < Rational::from_integer(0) {
        -x
    } else {
        x
    }
}

/// Expected one-step change of `Z` under violation probability `p`:
/// `Delta(t) = p |alpha - tY/(t+1) - 1/(t+1)| + (1-p) |alpha - tY/(t+1)| - |alpha - Y|`.
pub fn delta_expected(alpha: f64, y: f64, t: u64, p: f64) -> f64 {
    let tf = t as f64;
    let base = alpha - tf * y / (tf + 1.0);
    p * (base - 1.0 / (tf + 1.0)).abs() + (1.0 - p) * base.abs() - (alpha - y).abs()
}

/// One step of the ideal-policy trace.
#[derive(Debug, Clone)]
pub struct OracleRow {
    pub t: u64,
    pub y: Rational,
    pub beta: Rational,
    /// Ideal violation decision for `t+1`; ties (`beta = 0`) choose 0.
    pub p_star: u8,
    pub v_next: u8,
    /// `Z(t) = |alpha - Y(t)|`.
    pub z: Rational,
    pub inside_kappa: bool,
    pub beta_zero_tie: bool,
}

/// Full trace of an ideal-control run, exact.
#[derive(Debug, Clone)]
pub struct OracleTrace {
    pub alpha: Rational,
    pub t0: u64,
    pub rows: Vec<OracleRow>,
    /// `Y` after the final recorded step.
    pub final_y: Rational,
    pub final_t: u64,
}

impl OracleTrace {
    pub fn final_z(&self) -> Rational {
        abs(self.alpha - self.final_y)
    }

    /// Plot-ready CSV: one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TheoryError> {
        writeln!(out, "t,y,beta,p_star,v_next,z,inside_kappa")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t,
                to_f64(r.y),
                to_f64(r.beta),
                r.p_star,
                r.v_next,
                to_f64(r.z),
                r.inside_kappa as u8
            )?;
        }
        Ok(())
    }
}

/// f64 view of an exact rational.
pub fn to_f64(x: Rational) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Simulates the ideal control policy from `(t0, y0)` for `steps` steps:
/// at each step `V(t+1) = p*(t)` with `p*` chosen by the sign of `beta`,
/// `beta = 0` breaking toward the non-violating action (logged).
///
/// Requires the theorem hypothesis `alpha > 1/(2(t0+1))`.
pub fn run_ideal_oracle(
    alpha: Rational,
    y0: Rational,
    t0: u64,
    steps: usize,
) -> Result<OracleTrace, TheoryError> {
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);
    let half = one / Rational::from_integer(2);
    if !(alpha > zero && alpha < half) {
        return Err(TheoryError::AlphaRange(to_f64(alpha)));
    }
    if !(y0 >= zero && y0 <= one) {
        return Err(TheoryError::Y0Range(to_f64(y0)));
    }
    let bound = one / (Rational::from_integer(2) * Rational::from_integer(t0 as i128 + 1));
    if alpha <= bound {
        return Err(TheoryError::HypothesisViolated {
            alpha: to_f64(alpha),
            bound: to_f64(bound),
            t0,
        });
    }

    let mut rows = Vec::with_capacity(steps);
    let mut y = y0;
    let mut t = t0;
    for _ in 0..steps {
        let b = beta_exact(alpha, y, t);
        let tie = b == zero;
        let p_star: u8 = if b < zero { 1 } else { 0 };
        let (lo, hi) = critical_region_exact(alpha, t);
        let inside = y > lo && y < hi;
        let z = abs(alpha - y);
        rows.push(OracleRow {
            t,
            y,
            beta: b,
            p_star,
            v_next: p_star,
            z,
            inside_kappa: inside,
            beta_zero_tie: tie,
        });
        let tr = Rational::from_integer(t as i128);
        y = (tr * y + Rational::from_integer(p_star as i128)) / (tr + one);
        t += 1;
    }
    Ok(OracleTrace {
        alpha,
        t0,
        rows,
        final_y: y,
        final_t: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rat(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn kappa_hand_values() {
        let k = critical_region(0.1, 9).unwrap();
        assert_abs_diff_eq!(k.lower, 0.052_631_6, epsilon = 1e-6);
        assert_abs_diff_eq!(k.upper, 0.105_263_2, epsilon = 1e-6);
        assert_abs_diff_eq!(k.width, 1.0 / 19.0, epsilon = 1e-12);
    }

    #[test]
    fn kappa_collapses_onto_alpha() {
        let k = critical_region(0.23, 10_000_000).unwrap();
        assert_abs_diff_eq!(k.lower, 0.23, epsilon = 1e-6);
        assert_abs_diff_eq!(k.upper, 0.23, epsilon = 1e-6);
        assert!(k.width < 1e-7);
    }

    #[test]
    fn kappa_width_identity_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for t in 1..=10_000u64 {
            let k = critical_region(0.1, t).unwrap();
            let closed_form = 1.0 / (2.0 * t as f64 + 1.0);
            assert!((k.width - closed_form).abs() <= 1e-12);
            assert!(k.width < prev);
            prev = k.width;
        }
    }

    #[test]
    fn kappa_rejects_bad_alpha() {
        assert!(matches!(
            critical_region(0.5, 3),
            Err(TheoryError::AlphaRange(_))
        ));
    }

    #[test]
    fn beta_hand_values() {
        assert_abs_diff_eq!(beta(0.1, 0.0, 9), -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(beta(0.1, 1.0, 9), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn beta_root_matches_closed_form() {
        // beta = 0 iff Y = (alpha - 1/(2(t+1))) / (1 - 1/(t+1)).
        let alpha = rat(1, 10);
        let t = 9u64;
        let y = (alpha - rat(1, 20)) / (rat(1, 1) - rat(1, 10));
        assert_eq!(beta_exact(alpha, y, t), rat(0, 1));
    }

    #[test]
    fn delta_at_y_equal_alpha() {
        for t in [1u64, 9, 99] {
            let d = delta_expected(0.1, 0.1, t, 0.0);
            assert_abs_diff_eq!(d, 0.1 / (t as f64 + 1.0), epsilon = 1e-12);
            assert!(d > 0.0);
        }
    }

    #[test]
    fn delta_vanishes_asymptotically() {
        for p in [0.0, 0.3, 1.0] {
            for y in [0.0, 0.1, 0.9] {
                let d = delta_expected(0.1, y, 1_000_000, p);
                assert!(d.abs() < 2e-6, "Delta = {d} at p={p}, y={y}");
            }
        }
    }

    #[test]
    fn delta_is_affine_in_p() {
        for &(alpha, y, t) in &[(0.1, 0.3, 7u64), (0.25, 0.0, 12), (0.4, 0.9, 100)] {
            for p in [0.2, 0.5, 0.9] {
                let direct = delta_expected(alpha, y, t, p);
                let affine = p * beta(alpha, y, t) + delta_expected(alpha, y, t, 0.0);
                assert_abs_diff_eq!(direct, affine, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn oracle_converges_from_zero() {
        let trace = run_ideal_oracle(rat(1, 10), rat(0, 1), 9, 10_000).unwrap();
        let t_final = trace.final_t as f64;
        let bound = 1.0 / t_final + 1.0 / (2.0 * t_final + 1.0);
        assert!(to_f64(trace.final_z()) <= bound);
    }

    #[test]
    fn oracle_descends_monotonically_until_kappa() {
        let trace = run_ideal_oracle(rat(3, 10), rat(1, 1), 9, 500).unwrap();
        let first_inside = trace
            .rows
            .iter()
            .position(|r| r.inside_kappa)
            .expect("trace should enter the critical region");
        for w in trace.rows[..first_inside].windows(2) {
            assert!(w[1].y <= w[0].y, "Y must decrease from above alpha");
            assert!(w[1].z <= w[0].z, "Z must not increase outside kappa");
        }
    }

    #[test]
    fn z_increases_only_inside_kappa() {
        for (a_num, y0_num) in [(1i128, 0i128), (2, 10), (3, 20)] {
            let trace =
                run_ideal_oracle(rat(a_num, 10), rat(y0_num, 20), 9, 5_000).unwrap();
            for w in trace.rows.windows(2) {
                if w[1].z > w[0].z {
                    assert!(
                        w[0].inside_kappa,
                        "Z rose outside kappa at t = {}",
                        w[0].t
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_visits_and_leaves_kappa() {
        for t0 in [9u64, 50, 100] {
            for y0_num in 0..=20i128 {
                let trace = run_ideal_oracle(rat(1, 10), rat(y0_num, 20), t0, 4_000).unwrap();
                let enter = trace.rows.iter().position(|r| r.inside_kappa);
                let enter = enter.expect("every tested start must enter kappa");
                let leave = trace.rows[enter..].iter().position(|r| !r.inside_kappa);
                assert!(
                    leave.is_some(),
                    "trace from y0={y0_num}/20, t0={t0} never left kappa"
                );
            }
        }
    }

    #[test]
    fn hypothesis_violation_is_named() {
        let err = run_ideal_oracle(rat(1, 25), rat(0, 1), 9, 10).unwrap_err();
        match err {
            TheoryError::HypothesisViolated { t0, .. } => assert_eq!(t0, 9),
            other => panic!("expected hypothesis error, got {other}"),
        }
    }

    #[test]
    fn tie_break_is_logged_and_nonviolating() {
        // At t=9, alpha=1/10: beta root Y = (1/10 - 1/20)/(9/10) = 1/18.
        let trace = run_ideal_oracle(rat(1, 10), rat(1, 18), 9, 1).unwrap();
        let row = &trace.rows[0];
        assert!(row.beta_zero_tie);
        assert_eq!(row.p_star, 0);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let trace = run_ideal_oracle(rat(1, 10), rat(0, 1), 9, 25).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y,beta,p_star,v_next,z,inside_kappa"));
        assert_eq!(text.lines().count(), 26);
    }
}
