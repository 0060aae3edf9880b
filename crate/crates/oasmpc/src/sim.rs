//! End-to-end closed-loop simulation of the four benchmark controllers.
//!
//! Per step: solve the nominal problem, post-process the first input for
//! the realized uncertainty, record the violation, update the time-average,
//! then (for the adaptive cases) run the trigger check and the h update
//! with the on-peak freeze, and advance. The two traditional variants skip
//! adaptation: Traditional 1 keeps the hard SOC bounds, Traditional 2 runs
//! with the bounds permanently relaxed by the triggering parameter.

use chrono::{Duration, NaiveDateTime};
use nalgebra::DVector;
use rayon::prelude::*;
use std::fmt;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::adapt::{apply_onpeak_freeze, AdaptError, AdaptiveState};
use crate::lti::{stack_horizon, LtiError};
use crate::microgrid::{
    build_mg_system, mg_objective, monthly_bill, months_covered, sum_bills, synth_scenario,
    BessSpec, ForecastSet, MgError, MonthlyBill, SynthParams, Tariff, YearlySummary,
    REFERENCE_SEED,
};
use crate::mpc::{build_nominal_problem, solve_step, MpcError};
use crate::postproc::{correct_for_uncertainty, PostprocError, StateDesignLimits};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("infeasible nominal problem at step {step}{}: {report}", dump_note(.dump_path))]
    Infeasible {
        step: usize,
        report: String,
        dump_path: Option<PathBuf>,
    },
    #[error("solver failed at step {step}: {source}")]
    Solver { step: usize, source: MpcError },
    #[error(transparent)]
    Scenario(#[from] MgError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Postproc(#[from] PostprocError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn dump_note(p: &Option<PathBuf>) -> String {
    match p {
        Some(p) => format!(" (LP dumped to {})", p.display()),
        None => String::new(),
    }
}

/// The four benchmark controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCase {
    /// Hard SOC bounds, no relaxation.
    Traditional1,
    /// Adaptive relaxation with trigger, freeze, and the online update.
    OaSmpc1,
    /// Bounds permanently relaxed by the triggering parameter, no
    /// adaptation.
    Traditional2,
    /// OA-SMPC with a mid-run restart of (h, t, Y).
    OaSmpc2,
}

impl TestCase {
    pub const ALL: [TestCase; 4] = [
        TestCase::Traditional1,
        TestCase::OaSmpc1,
        TestCase::Traditional2,
        TestCase::OaSmpc2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TestCase::Traditional1 => "traditional1",
            TestCase::OaSmpc1 => "oasmpc1",
            TestCase::Traditional2 => "traditional2",
            TestCase::OaSmpc2 => "oasmpc2",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SimError> {
        match s {
            "traditional1" => Ok(TestCase::Traditional1),
            "oasmpc1" => Ok(TestCase::OaSmpc1),
            "traditional2" => Ok(TestCase::Traditional2),
            "oasmpc2" => Ok(TestCase::OaSmpc2),
            other => Err(SimError::BadInput(format!(
                "unknown test case `{other}` (expected traditional1|oasmpc1|traditional2|oasmpc2)"
            ))),
        }
    }

    fn adaptive(&self) -> bool {
        matches!(self, TestCase::OaSmpc1 | TestCase::OaSmpc2)
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the scenario data comes from.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    Csv(PathBuf),
    Synthetic { seed: u64, days: usize, params: SynthParams },
}

/// Full configuration for one simulation run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub test_case: TestCase,
    pub bess: BessSpec,
    pub tariff: Tariff,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub trigger_tol: f64,
    /// Triggering relaxation, applied to both JCC components.
    pub h_trigger: f64,
    pub x0: f64,
    pub horizon_steps: usize,
    pub scenario: ScenarioSource,
    pub restart_step: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Write the first step's LP in plain text next to the other outputs.
    pub dump_lp: bool,
}

impl RunConfig {
    /// The repository's reference configuration: hourly desk-scale
    /// resolution, one-day horizon, reference battery/tariff, and the
    /// fixed synthetic seed.
    pub fn reference(test_case: TestCase) -> Self {
        Self {
            test_case,
            bess: BessSpec::reference_hourly(),
            tariff: Tariff::reference(),
            alpha: 0.1,
            gamma: 15.0,
            epsilon: crate::adapt::DEFAULT_EPSILON,
            trigger_tol: crate::adapt::DEFAULT_TRIGGER_TOL,
            h_trigger: -0.1,
            x0: 0.5,
            horizon_steps: 24,
            scenario: ScenarioSource::Synthetic {
                seed: REFERENCE_SEED,
                days: 365,
                params: SynthParams::default(),
            },
            restart_step: if test_case == TestCase::OaSmpc2 {
                Some(365 * 24 / 2)
            } else {
                None
            },
            out_dir: None,
            dump_lp: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon_steps == 0 {
            return Err(SimError::BadInput("horizon must be at least 1 step".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(SimError::BadInput(format!(
                "alpha = {} outside (0, 0.5)",
                self.alpha
            )));
        }
        if self.gamma <= 0.0 {
            return Err(SimError::BadInput("gamma must be positive".into()));
        }
        if self.h_trigger > 0.0 {
            return Err(SimError::BadInput("h_trigger must be <= 0".into()));
        }
        match (self.test_case, self.restart_step) {
            (TestCase::OaSmpc2, None) => Err(SimError::BadInput(
                "oasmpc2 requires restart_step".into(),
            )),
            (TestCase::OaSmpc2, Some(_)) => Ok(()),
            (_, Some(_)) => Err(SimError::BadInput(
                "restart_step is only valid for oasmpc2".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// One recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub timestamp: NaiveDateTime,
    pub x: f64,
    pub u1_star: f64,
    pub u2_star: f64,
    pub u1: f64,
    pub u2: f64,
    pub w: f64,
    pub v: u8,
    pub y: f64,
    pub h1: f64,
    pub h2: f64,
    pub status: &'static str,
    pub objective: f64,
}

/// Complete closed-loop record of one run.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub case: TestCase,
    pub alpha: f64,
    pub rows: Vec<TraceRow>,
    pub final_x: f64,
}

impl SimulationTrace {
    /// Time-average of violations at the end of the run.
    pub fn final_y(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.y)
    }

    pub fn timestamps(&self) -> Vec<NaiveDateTime> {
        self.rows.iter().map(|r| r.timestamp).collect()
    }

    pub fn monthly_bills(
        &self,
        tariff: &Tariff,
        bess: &BessSpec,
    ) -> Result<Vec<MonthlyBill>, MgError> {
        let ts = self.timestamps();
        let u1: Vec<f64> = self.rows.iter().map(|r| r.u1).collect();
        let u2: Vec<f64> = self.rows.iter().map(|r| r.u2).collect();
        months_covered(&ts)
            .into_iter()
            .map(|(y, m)| monthly_bill(&ts, &u1, &u2, tariff, bess, y, m))
            .collect()
    }

    pub fn year_summary(
        &self,
        tariff: &Tariff,
        bess: &BessSpec,
    ) -> Result<YearlySummary, MgError> {
        Ok(sum_bills(&self.monthly_bills(tariff, bess)?))
    }

    pub fn write_trace_csv<W: IoWrite>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "timestamp,x,u1_star,u2_star,u1,u2,w,v,y,h1,h2,status,objective"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.timestamp.format("%Y-%m-%dT%H:%M:%S"),
                r.x,
                r.u1_star,
                r.u2_star,
                r.u1,
                r.u2,
                r.w,
                r.v,
                r.y,
                r.h1,
                r.h2,
                r.status,
                r.objective
            )?;
        }
        Ok(())
    }

    /// Plot data: time-average vs its target, the relaxation components,
    /// and the step change of `Z = |alpha - Y|`.
    pub fn write_fig_csv<W: IoWrite>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,y,alpha,h1,h2,abs_dz")?;
        let mut prev_z: Option<f64> = None;
        for (t, r) in self.rows.iter().enumerate() {
            let z = (self.alpha - r.y).abs();
            let dz = prev_z.map_or(0.0, |p| (z - p).abs());
            writeln!(out, "{t},{},{},{},{},{dz}", r.y, self.alpha, r.h1, r.h2)?;
            prev_z = Some(z);
        }
        Ok(())
    }
}

struct LoadedScenario {
    set: ForecastSet,
}

fn load_scenario(cfg: &RunConfig) -> Result<LoadedScenario, SimError> {
    let set = match &cfg.scenario {
        ScenarioSource::Csv(path) => ForecastSet::read_csv_path(path)?,
        ScenarioSource::Synthetic { seed, days, params } => {
            if (params.dt_hours - cfg.bess.dt_hours).abs() > 1e-12 {
                return Err(SimError::BadInput(format!(
                    "scenario dt {} differs from battery dt {}",
                    params.dt_hours, cfg.bess.dt_hours
                )));
            }
            synth_scenario(*seed, *days, params)?
        }
    };
    if set.len() < cfg.horizon_steps {
        return Err(SimError::BadInput(format!(
            "scenario has {} steps, horizon needs {}",
            set.len(),
            cfg.horizon_steps
        )));
    }
    Ok(LoadedScenario { set })
}

/// Runs one closed-loop simulation over the full scenario. Forecast
/// lookups wrap cyclically at the scenario tail so every recorded step
/// sees a complete horizon; horizon wall-clock timestamps advance
/// linearly for on-peak bookkeeping.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationTrace, SimError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    let set = &scenario.set;
    let steps = set.len();
    let n = cfg.horizon_steps;
    let dt_step = Duration::seconds((cfg.bess.dt_hours * 3600.0).round() as i64);

    let (sys, spec, pp_cfg) = build_mg_system(&cfg.bess, cfg.alpha)?;
    let h_trigger_vec = DVector::from_element(2, cfg.h_trigger);
    let mut adapt = AdaptiveState::new(
        DVector::from_element(2, cfg.alpha),
        Some(cfg.alpha),
        DVector::from_element(2, cfg.gamma),
        cfg.epsilon,
        DVector::zeros(2),
        h_trigger_vec.clone(),
        DVector::from_row_slice(&[cfg.bess.soc_max - 1.0, -cfg.bess.soc_min]),
    )?;

    let mut rows = Vec::with_capacity(steps);
    let mut x = cfg.x0;
    let mut horizon_ts = vec![NaiveDateTime::MIN; n];
    let mut m_forecast: Vec<DVector<f64>> = vec![DVector::zeros(1); n];

    for t in 0..steps {
        if cfg.test_case == TestCase::OaSmpc2 && Some(t) == cfg.restart_step {
            adapt.restart();
        }
        let now = set.timestamps[t];
        for k in 0..n {
            horizon_ts[k] = now + dt_step * k as i32;
            m_forecast[k][0] = set.net_forecast((t + k) % steps);
        }
        let h_lp = match cfg.test_case {
            TestCase::Traditional1 => DVector::zeros(2),
            TestCase::Traditional2 => h_trigger_vec.clone(),
            _ => adapt.h().clone(),
        };
        let data = stack_horizon(&sys, &spec, n, &m_forecast, &h_lp)?;
        let objective = mg_objective(&cfg.tariff, &cfg.bess, &horizon_ts);
        let x_vec = DVector::from_element(1, x);
        let result = match solve_step(&data, &objective, &x_vec) {
            Ok(r) => r,
            Err(MpcError::Infeasible(report)) => {
                let dump_path = cfg.out_dir.as_ref().map(|dir| {
                    let path = dir.join(format!("infeasible_step_{t}.lp.txt"));
                    if let Ok(lp) = build_nominal_problem(&data, &objective, &x_vec) {
                        let _ = std::fs::create_dir_all(dir);
                        let _ = std::fs::write(&path, lp.dump());
                    }
                    path
                });
                return Err(SimError::Infeasible {
                    step: t,
                    report: report
                        .iter()
                        .map(|r| format!("{} ({:.3e})", r.name, r.residual))
                        .collect::<Vec<_>>()
                        .join(", "),
                    dump_path,
                });
            }
            Err(e) => return Err(SimError::Solver { step: t, source: e }),
        };
        if cfg.dump_lp && t == 0 {
            if let Some(dir) = &cfg.out_dir {
                std::fs::create_dir_all(dir)?;
                let lp = build_nominal_problem(&data, &objective, &x_vec)
                    .map_err(|e| SimError::Solver { step: t, source: e })?;
                std::fs::write(dir.join("step0.lp.txt"), lp.dump())?;
            }
        }

        // Closed-loop correction for the realized uncertainty.
        let w = set.uncertainty(t);
        let limits = StateDesignLimits::from_rows(&spec, &h_lp);
        let closed = correct_for_uncertainty(
            &result.first_input,
            &x_vec,
            &DVector::from_element(1, w),
            &DVector::from_element(1, set.net_forecast(t)),
            &pp_cfg,
            limits,
            &sys,
            &spec,
        )?;

        // Observe the realized state, then adapt.
        let record = adapt.observe_state(&closed.x_next, &spec);
        if cfg.test_case.adaptive() {
            if !adapt.triggered() {
                adapt.check_trigger(&closed.x_next, &spec, cfg.trigger_tol);
            } else {
                let candidate = adapt.update_h()?;
                let next_start = now + dt_step;
                let frozen =
                    apply_onpeak_freeze(&candidate, adapt.h(), cfg.tariff.is_onpeak(next_start));
                adapt.set_h(frozen)?;
            }
        }

        rows.push(TraceRow {
            timestamp: now,
            x,
            u1_star: result.first_input[0],
            u2_star: result.first_input[1],
            u1: closed.u_applied[0],
            u2: closed.u_applied[1],
            w,
            v: record.jcc as u8,
            y: adapt.joint_y(),
            h1: h_lp[0],
            h2: h_lp[1],
            status: "optimal",
            objective: result.objective,
        });
        x = closed.x_next[0];
    }

    Ok(SimulationTrace {
        case: cfg.test_case,
        alpha: cfg.alpha,
        rows,
        final_x: x,
    })
}

/// Output files produced by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub trace_csv: PathBuf,
    pub monthly_bills_csv: PathBuf,
    pub yearly_summary_csv: PathBuf,
    pub fig_data_csv: PathBuf,
}

/// Writes the trace, monthly bills, year summary, and plot-data CSVs into
/// the configured output directory.
pub fn write_outputs(trace: &SimulationTrace, cfg: &RunConfig) -> Result<OutputFiles, SimError> {
    let dir = cfg
        .out_dir
        .as_ref()
        .ok_or_else(|| SimError::BadInput("out_dir is required to write outputs".into()))?;
    std::fs::create_dir_all(dir)?;
    let files = OutputFiles {
        trace_csv: dir.join("trace.csv"),
        monthly_bills_csv: dir.join("monthly_bills.csv"),
        yearly_summary_csv: dir.join("yearly_summary.csv"),
        fig_data_csv: dir.join("fig_data.csv"),
    };

    trace.write_trace_csv(std::io::BufWriter::new(std::fs::File::create(
        &files.trace_csv,
    )?))?;

    let bills = trace.monthly_bills(&cfg.tariff, &cfg.bess)?;
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&files.monthly_bills_csv)?);
        writeln!(
            out,
            "year,month,ncdc,opdc,energy_cost,bess_loss_cost,total,bess_cycles"
        )?;
        for b in &bills {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                b.year, b.month, b.ncdc, b.opdc, b.energy_cost, b.bess_loss_cost, b.total,
                b.bess_cycles
            )?;
        }
    }

    let summary = sum_bills(&bills);
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&files.yearly_summary_csv)?);
        writeln!(out, "metric,value")?;
        writeln!(out, "NCDC,{}", summary.ncdc)?;
        writeln!(out, "OPDC,{}", summary.opdc)?;
        writeln!(out, "Energy Cost,{}", summary.energy_cost)?;
        writeln!(out, "BESS loss,{}", summary.bess_loss_cost)?;
        writeln!(out, "Total Cost,{}", summary.total)?;
        writeln!(out, "Total BESS cycles,{}", summary.bess_cycles)?;
        writeln!(out, "Y at year end,{}", trace.final_y())?;
    }

    trace.write_fig_csv(std::io::BufWriter::new(std::fs::File::create(
        &files.fig_data_csv,
    )?))?;
    Ok(files)
}

/// Runs seeds x cases concurrently, one independent adaptive state each.
pub fn sweep(
    base: &RunConfig,
    seeds: &[u64],
    cases: &[TestCase],
) -> Result<Vec<(u64, TestCase, SimulationTrace)>, SimError> {
    let combos: Vec<(u64, TestCase)> = seeds
        .iter()
        .flat_map(|&s| cases.iter().map(move |&c| (s, c)))
        .collect();
    combos
        .par_iter()
        .map(|&(seed, case)| {
            let mut cfg = base.clone();
            cfg.test_case = case;
            cfg.restart_step = match case {
                TestCase::OaSmpc2 => base.restart_step.or_else(|| {
                    RunConfig::reference(TestCase::OaSmpc2).restart_step
                }),
                _ => None,
            };
            cfg.out_dir = base
                .out_dir
                .as_ref()
                .map(|d| d.join(format!("{case}_seed{seed}")));
            if let ScenarioSource::Synthetic { days, params, .. } = &base.scenario {
                cfg.scenario = ScenarioSource::Synthetic {
                    seed,
                    days: *days,
                    params: params.clone(),
                };
            }
            let trace = run_simulation(&cfg)?;
            if cfg.out_dir.is_some() {
                write_outputs(&trace, &cfg)?;
            }
            Ok((seed, case, trace))
        })
        .collect()
}

/// Parses the flat `key = value` configuration format. `#` starts a
/// comment; keys mirror the documented parameter names.
pub fn parse_config_text(text: &str) -> Result<RunConfig, SimError> {
    let mut kv: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(SimError::BadInput(format!(
                "config line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    build_config(&kv)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig, SimError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

fn build_config(kv: &[(String, String)]) -> Result<RunConfig, SimError> {
    let get = |key: &str| kv.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let parse_f64 = |key: &str, default: f64| -> Result<f64, SimError> {
        match get(key) {
            Some(v) => v
                .parse::<f64>()
                .map_err(|e| SimError::BadInput(format!("{key}: {e}"))),
            None => Ok(default),
        }
    };
    let parse_usize = |key: &str, default: usize| -> Result<usize, SimError> {
        match get(key) {
            Some(v) => v
                .parse::<usize>()
                .map_err(|e| SimError::BadInput(format!("{key}: {e}"))),
            None => Ok(default),
        }
    };

    const KNOWN: &[&str] = &[
        "test_case", "n_horizon", "dt_hours", "bess_energy_kwh", "bess_power_kw", "eta",
        "soc_min", "soc_max", "x_hat", "x0", "alpha", "gamma", "h_trigger", "epsilon",
        "trigger_tol", "r_nc", "r_op", "r_ec", "onpeak_start", "onpeak_end", "scenario",
        "seed", "days", "csv_path", "restart_step", "out_dir", "load_base_kw", "load_amp_kw",
        "pv_peak_kw", "sigma_w_kw", "ar1", "forecast_noise_kw", "forecast_ar1", "start_date",
    ];
    for (k, _) in kv {
        if !KNOWN.contains(&k.as_str()) {
            return Err(SimError::BadInput(format!("unknown config key `{k}`")));
        }
    }

    let test_case = TestCase::parse(get("test_case").unwrap_or("oasmpc1"))?;
    let mut cfg = RunConfig::reference(test_case);

    let dt = parse_f64("dt_hours", cfg.bess.dt_hours)?;
    cfg.bess = BessSpec::new(
        parse_f64("bess_energy_kwh", cfg.bess.energy_kwh)?,
        parse_f64("bess_power_kw", cfg.bess.power_kw)?,
        parse_f64("eta", cfg.bess.eta)?,
        parse_f64("soc_min", cfg.bess.soc_min)?,
        parse_f64("soc_max", cfg.bess.soc_max)?,
        parse_f64("x_hat", cfg.bess.x_hat)?,
        dt,
    )?;
    let parse_time = |key: &str, default: chrono::NaiveTime| -> Result<chrono::NaiveTime, SimError> {
        match get(key) {
            Some(v) => chrono::NaiveTime::parse_from_str(v, "%H:%M")
                .map_err(|e| SimError::BadInput(format!("{key}: {e}"))),
            None => Ok(default),
        }
    };
    cfg.tariff = Tariff::new(
        parse_f64("r_nc", cfg.tariff.r_nc)?,
        parse_f64("r_op", cfg.tariff.r_op)?,
        parse_f64("r_ec", cfg.tariff.r_ec)?,
        parse_time("onpeak_start", cfg.tariff.onpeak_start)?,
        parse_time("onpeak_end", cfg.tariff.onpeak_end)?,
    )?;
    cfg.alpha = parse_f64("alpha", cfg.alpha)?;
    cfg.gamma = parse_f64("gamma", cfg.gamma)?;
    cfg.epsilon = parse_f64("epsilon", cfg.epsilon)?;
    cfg.trigger_tol = parse_f64("trigger_tol", cfg.trigger_tol)?;
    cfg.h_trigger = parse_f64("h_trigger", cfg.h_trigger)?;
    cfg.x0 = parse_f64("x0", cfg.x0)?;
    cfg.horizon_steps = parse_usize("n_horizon", cfg.horizon_steps)?;
    cfg.restart_step = match get("restart_step") {
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|e| SimError::BadInput(format!("restart_step: {e}")))?,
        ),
        None => cfg.restart_step,
    };
    if test_case != TestCase::OaSmpc2 {
        cfg.restart_step = None;
    }
    cfg.out_dir = get("out_dir").map(PathBuf::from);

    let scenario_kind = get("scenario").unwrap_or("synthetic");
    cfg.scenario = match scenario_kind {
        "csv" => {
            let path = get("csv_path").ok_or_else(|| {
                SimError::BadInput("scenario = csv requires csv_path".into())
            })?;
            ScenarioSource::Csv(PathBuf::from(path))
        }
        "synthetic" => {
            let mut params = SynthParams {
                dt_hours: dt,
                ..Default::default()
            };
            params.load_base_kw = parse_f64("load_base_kw", params.load_base_kw)?;
            params.load_amp_kw = parse_f64("load_amp_kw", params.load_amp_kw)?;
            params.pv_peak_kw = parse_f64("pv_peak_kw", params.pv_peak_kw)?;
            params.sigma_w_kw = parse_f64("sigma_w_kw", params.sigma_w_kw)?;
            params.ar1 = parse_f64("ar1", params.ar1)?;
            params.forecast_noise_kw = parse_f64("forecast_noise_kw", params.forecast_noise_kw)?;
            params.forecast_ar1 = parse_f64("forecast_ar1", params.forecast_ar1)?;
            if let Some(v) = get("start_date") {
                params.start = chrono::NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|e| SimError::BadInput(format!("start_date: {e}")))?;
            }
            ScenarioSource::Synthetic {
                seed: parse_usize("seed", REFERENCE_SEED as usize)? as u64,
                days: parse_usize("days", 365)?,
                params,
            }
        }
        other => {
            return Err(SimError::BadInput(format!(
                "scenario must be synthetic or csv, got `{other}`"
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_cfg(case: TestCase, days: usize) -> RunConfig {
        let mut cfg = RunConfig::reference(case);
        if let ScenarioSource::Synthetic { seed, params, .. } = &cfg.scenario {
            cfg.scenario = ScenarioSource::Synthetic {
                seed: *seed,
                days,
                params: params.clone(),
            };
        }
        if case == TestCase::OaSmpc2 {
            cfg.restart_step = Some(days * 24 / 2);
        }
        cfg
    }

    #[test]
    fn traditional1_never_violates() {
        let trace = run_simulation(&short_cfg(TestCase::Traditional1, 2)).unwrap();
        assert_eq!(trace.rows.len(), 48);
        for r in &trace.rows {
            assert_eq!(r.v, 0);
            assert_eq!(r.y, 0.0);
            assert!(r.x >= 0.2 - 1e-9 && r.x <= 0.8 + 1e-9, "SOC {} out of band", r.x);
        }
        assert!(trace.final_x >= 0.2 - 1e-9 && trace.final_x <= 0.8 + 1e-9);
    }

    #[test]
    fn power_balance_holds_in_closed_loop() {
        let cfg = short_cfg(TestCase::OaSmpc1, 3);
        let scenario = match &cfg.scenario {
            ScenarioSource::Synthetic { seed, days, params } => {
                synth_scenario(*seed, *days, params).unwrap()
            }
            _ => unreachable!(),
        };
        let trace = run_simulation(&cfg).unwrap();
        for (t, r) in trace.rows.iter().enumerate() {
            let net_real = scenario.pv_actual[t] - scenario.load_actual[t];
            assert!(
                (r.u1 - r.u2 - net_real).abs() <= 1e-9,
                "balance off at step {t}"
            );
        }
    }

    #[test]
    fn rows_are_monotone_and_complete() {
        let trace = run_simulation(&short_cfg(TestCase::OaSmpc1, 2)).unwrap();
        assert_eq!(trace.rows.len(), 48);
        for w in trace.rows.windows(2) {
            assert!(w[1].timestamp > w[0].timestamp);
        }
    }

    #[test]
    fn identical_configs_reproduce_identical_traces() {
        let cfg = short_cfg(TestCase::OaSmpc1, 2);
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn oasmpc2_requires_restart_step() {
        let mut cfg = short_cfg(TestCase::OaSmpc2, 2);
        cfg.restart_step = None;
        assert!(matches!(
            run_simulation(&cfg),
            Err(SimError::BadInput(_))
        ));
    }

    #[test]
    fn restart_resets_the_average_mid_run() {
        let mut cfg = short_cfg(TestCase::OaSmpc2, 4);
        cfg.restart_step = Some(48);
        let trace = run_simulation(&cfg).unwrap();
        // Immediately after the restart the average restarts from scratch:
        // y at step 48 is either 0 or 1.
        let y48 = trace.rows[48].y;
        assert!(y48 == 0.0 || y48 == 1.0, "y after restart = {y48}");
        // And h at the restart step is the triggering value.
        assert_eq!(trace.rows[48].h1, -0.1);
    }

    #[test]
    fn config_text_round_trip_and_overrides() {
        let text = "
            # reference-style run at a coarse step
            test_case = oasmpc1
            n_horizon = 12
            dt_hours = 2
            alpha = 0.2
            seed = 7
            days = 4
            gamma = 15
        ";
        let cfg = parse_config_text(text).unwrap();
        assert_eq!(cfg.test_case, TestCase::OaSmpc1);
        assert_eq!(cfg.horizon_steps, 12);
        assert_eq!(cfg.alpha, 0.2);
        match cfg.scenario {
            ScenarioSource::Synthetic { seed, days, ref params } => {
                assert_eq!(seed, 7);
                assert_eq!(days, 4);
                assert_eq!(params.dt_hours, 2.0);
            }
            _ => panic!("expected synthetic"),
        }
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let err = parse_config_text("no_such_key = 1").unwrap_err();
        assert!(matches!(err, SimError::BadInput(_)));
    }

    #[test]
    fn malformed_config_line_is_rejected() {
        let err = parse_config_text("just some words").unwrap_err();
        assert!(matches!(err, SimError::BadInput(_)));
    }

    #[test]
    fn outputs_written_with_documented_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = short_cfg(TestCase::Traditional1, 2);
        cfg.out_dir = Some(dir.path().to_path_buf());
        let trace = run_simulation(&cfg).unwrap();
        let files = write_outputs(&trace, &cfg).unwrap();
        for f in [
            &files.trace_csv,
            &files.monthly_bills_csv,
            &files.yearly_summary_csv,
            &files.fig_data_csv,
        ] {
            assert!(f.exists(), "{} missing", f.display());
        }
        let summary = std::fs::read_to_string(&files.yearly_summary_csv).unwrap();
        for label in [
            "NCDC", "OPDC", "Energy Cost", "BESS loss", "Total Cost",
            "Total BESS cycles", "Y at year end",
        ] {
            assert!(summary.contains(label), "summary missing row {label}");
        }
    }

    #[test]
    fn rerun_outputs_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for (dir, _) in [(&dir_a, 0), (&dir_b, 1)] {
            let mut cfg = short_cfg(TestCase::OaSmpc1, 2);
            cfg.out_dir = Some(dir.path().to_path_buf());
            let trace = run_simulation(&cfg).unwrap();
            write_outputs(&trace, &cfg).unwrap();
        }
        for name in ["trace.csv", "monthly_bills.csv", "yearly_summary.csv", "fig_data.csv"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn sweep_covers_every_combination() {
        let cfg = short_cfg(TestCase::OaSmpc1, 2);
        let out = sweep(&cfg, &[1, 2], &[TestCase::Traditional1, TestCase::OaSmpc1]).unwrap();
        assert_eq!(out.len(), 4);
        let mut seen: Vec<(u64, TestCase)> = out.iter().map(|(s, c, _)| (*s, *c)).collect();
        seen.sort_by_key(|(s, c)| (*s, c.as_str()));
        assert_eq!(
            seen,
            vec![
                (1, TestCase::OaSmpc1),
                (1, TestCase::Traditional1),
                (2, TestCase::OaSmpc1),
                (2, TestCase::Traditional1),
            ]
        );
    }
}
