//! Fast invariant suites behind the `verify` subcommand: each check
//! re-derives a core property from scratch and reports pass/fail, so a
//! build can be sanity-checked without the full test harness.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::adapt::AdaptiveState;
use crate::lp::{solve_lp, LinearProgram};
use crate::lti::{stack_horizon, ConstraintSpec, LtiSystem};
use crate::microgrid::{build_mg_system, mg_objective, BessSpec, Tariff};
use crate::mpc::solve_step;
use crate::sim::{run_simulation, RunConfig, ScenarioSource, TestCase};
use crate::theory::{critical_region, run_ideal_oracle, Rational};

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

/// Runs every invariant suite and returns one result per check.
pub fn run_all() -> Vec<CheckResult> {
    let checks: Vec<(&'static str, fn() -> Result<(), String>)> = vec![
        ("horizon stacking matches per-step recursion", check_stacking),
        ("LP solves are deterministic", check_lp_determinism),
        ("dispatch LP beats a coarse grid search", check_grid_search),
        ("violation average matches its recursion", check_average),
        ("critical-region width identity", check_kappa),
        ("ideal oracle monotone outside the critical region", check_oracle),
        ("closed-loop physics over two weeks", check_physics),
    ];
    checks
        .into_iter()
        .map(|(name, f)| CheckResult { name, outcome: f() })
        .collect()
}

fn check_stacking() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..20 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let steps = rng.gen_range(1..=6);
        let sys = LtiSystem::new(
            DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0)),
        )
        .map_err(|e| e.to_string())?;
        let spec = ConstraintSpec::new(
            DMatrix::zeros(0, m),
            DVector::zeros(0),
            DMatrix::zeros(0, m),
            DMatrix::zeros(0, 1),
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 0.1),
            None,
            None,
        )
        .map_err(|e| e.to_string())?;
        let data = stack_horizon(
            &sys,
            &spec,
            steps,
            &vec![DVector::zeros(0); steps],
            &DVector::from_element(1, 0.0),
        )
        .map_err(|e| e.to_string())?;
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let u: Vec<DVector<f64>> = (0..steps)
            .map(|_| DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let fast = crate::lti::propagate_nominal(&data, &x0, &u).map_err(|e| e.to_string())?;
        let mut x = x0.clone();
        for (k, uk) in u.iter().enumerate() {
            x = sys.a() * &x + sys.b() * uk;
            let err = (&fast[k] - &x).abs().max();
            if err > 1e-10 {
                return Err(format!("case {case}: deviation {err:.2e} at step {k}"));
            }
        }
    }
    Ok(())
}

fn check_lp_determinism() -> Result<(), String> {
    let mut lp = LinearProgram::new();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for j in 0..5 {
        lp.add_var(format!("x{j}"), -3.0, 4.0, rng.gen_range(-1.0..1.0))
            .map_err(|e| e.to_string())?;
    }
    for i in 0..6 {
        let coeffs: Vec<(usize, f64)> = (0..5).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
        lp.add_le(format!("r{i}"), &coeffs, rng.gen_range(0.0..3.0))
            .map_err(|e| e.to_string())?;
    }
    let a = solve_lp(&lp);
    let b = solve_lp(&lp);
    if a.status != b.status {
        return Err("status differs between identical solves".into());
    }
    for (x, y) in a.primal.iter().zip(b.primal.iter()) {
        if x.to_bits() != y.to_bits() {
            return Err("primal vectors differ bitwise".into());
        }
    }
    Ok(())
}

fn check_grid_search() -> Result<(), String> {
    let bess = BessSpec::reference();
    let tariff = Tariff::reference();
    let (sys, spec, _) = build_mg_system(&bess, 0.1).map_err(|e| e.to_string())?;
    let net = [-150.0, 250.0];
    let forecast: Vec<DVector<f64>> = net.iter().map(|&v| DVector::from_element(1, v)).collect();
    let h = DVector::from_element(2, -0.05);
    let data = stack_horizon(&sys, &spec, 2, &forecast, &h).map_err(|e| e.to_string())?;
    let start = chrono::NaiveDate::from_ymd_opt(2019, 6, 1)
        .unwrap()
        .and_hms_opt(17, 0, 0)
        .unwrap();
    let stamps = [start, start + chrono::Duration::minutes(15)];
    let objective = mg_objective(&tariff, &bess, &stamps);
    let x0 = 0.5;
    let res = solve_step(&data, &objective, &DVector::from_element(1, x0))
        .map_err(|e| e.to_string())?;

    let b11 = bess.b11();
    let (hi, lo) = (bess.soc_max + 0.05, bess.soc_min - 0.05);
    let mut best = f64::INFINITY;
    let mut u1a = -700.0;
    while u1a <= 700.0 {
        let x1 = x0 + b11 * u1a;
        if x1 <= hi && x1 >= lo {
            let mut u1b = -700.0;
            while u1b <= 700.0 {
                let x2 = x1 + b11 * u1b;
                if x2 <= hi && x2 >= lo && x2 >= bess.x_hat {
                    let u2 = [u1a - net[0], u1b - net[1]];
                    let peak = u2[0].max(u2[1]).max(0.0);
                    let cost = tariff.r_nc * peak
                        + tariff.r_op * peak
                        + tariff.r_ec * bess.dt_hours * (u2[0] + u2[1])
                        + tariff.r_ec * bess.dt_hours * 0.1 * (u1a.abs() + u1b.abs());
                    best = best.min(cost);
                }
                u1b += 1.0;
            }
        }
        u1a += 1.0;
    }
    if res.objective > best + 1e-4 {
        return Err(format!("LP objective {} above grid optimum {best}", res.objective));
    }
    Ok(())
}

fn check_average() -> Result<(), String> {
    let spec = ConstraintSpec::new(
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        DMatrix::zeros(0, 2),
        DMatrix::zeros(0, 1),
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_row_slice(&[0.8, -0.2]),
        DVector::from_row_slice(&[0.1, 0.1]),
        Some(0.1),
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut st = AdaptiveState::new(
        DVector::from_element(2, 0.1),
        Some(0.1),
        DVector::from_element(2, 15.0),
        0.0,
        DVector::zeros(2),
        DVector::from_element(2, -0.1),
        DVector::from_row_slice(&[-0.2, -0.2]),
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut y = 0.0_f64;
    let mut prev = 0.0_f64;
    for t in 1..=2_000u64 {
        let x = if rng.gen_bool(0.25) { 0.9 } else { 0.5 };
        let rec = st.observe_state(&DVector::from_element(1, x), &spec);
        let v = rec.jcc as u8 as f64;
        y = (t - 1) as f64 * y / t as f64 + v / t as f64;
        if (st.joint_y() - y).abs() > 1e-12 {
            return Err(format!("recursion mismatch at t={t}"));
        }
        if (st.joint_y() - prev).abs() > 1.0 / t as f64 + 1e-15 {
            return Err(format!("|dY| bound violated at t={t}"));
        }
        prev = st.joint_y();
    }
    Ok(())
}

fn check_kappa() -> Result<(), String> {
    let mut prev = f64::INFINITY;
    for t in 1..=1_000u64 {
        let k = critical_region(0.1, t).map_err(|e| e.to_string())?;
        if (k.width - 1.0 / (2.0 * t as f64 + 1.0)).abs() > 1e-12 {
            return Err(format!("width identity broken at t={t}"));
        }
        if k.width >= prev {
            return Err(format!("width not strictly decreasing at t={t}"));
        }
        prev = k.width;
    }
    Ok(())
}

fn check_oracle() -> Result<(), String> {
    let trace = run_ideal_oracle(Rational::new(1, 10), Rational::new(0, 1), 9, 2_000)
        .map_err(|e| e.to_string())?;
    for w in trace.rows.windows(2) {
        if w[1].z > w[0].z && !w[0].inside_kappa {
            return Err(format!("Z rose outside the critical region at t={}", w[0].t));
        }
    }
    Ok(())
}

fn check_physics() -> Result<(), String> {
    let mut cfg = RunConfig::reference(TestCase::OaSmpc1);
    if let ScenarioSource::Synthetic { seed, params, .. } = &cfg.scenario {
        cfg.scenario = ScenarioSource::Synthetic {
            seed: *seed,
            days: 14,
            params: params.clone(),
        };
    }
    let trace = run_simulation(&cfg).map_err(|e| e.to_string())?;
    for (t, r) in trace.rows.iter().enumerate() {
        if r.u1.abs() > cfg.bess.power_kw + 1e-9 {
            return Err(format!("battery power limit exceeded at step {t}"));
        }
        if !(0.0..=1.0).contains(&r.x) {
            return Err(format!("SOC left [0, 1] at step {t}"));
        }
        // x is recorded at step start, so it was clamped by the previous
        // step's design limits.
        if t > 0 {
            let p = &trace.rows[t - 1];
            let upper = cfg.bess.soc_max - p.h1;
            let lower = cfg.bess.soc_min + p.h2;
            if r.x > upper + 1e-9 || r.x < lower - 1e-9 {
                return Err(format!("SOC outside design limits at step {t}"));
            }
        }
    }
    Ok(())
}
