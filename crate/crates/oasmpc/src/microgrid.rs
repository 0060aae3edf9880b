//! Grid-connected microgrid case study: BESS dispatch under demand-charge
//! billing.
//!
//! The scalar state is battery SOC; inputs are BESS power `u1` (positive =
//! charging) and grid import `u2`. The dispatch objective charges the
//! horizon's grid-import peaks at the non-coincident (NCDC) and on-peak
//! (OPDC) demand rates plus volumetric energy and a BESS round-trip-loss
//! term. Billing is monthly over the realized trace with the same
//! categories.

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::lti::{ConstraintSpec, LtiError, LtiSystem};
use crate::mpc::{ObjectiveSpec, PeakGroup};
use crate::postproc::{PostProcessConfig, PostprocError};

/// Seed of the repository's reference synthetic scenario.
pub const REFERENCE_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum MgError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("history too short: need at least {needed} samples, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("CSV error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace does not cover {year}-{month:02}")]
    MonthNotCovered { year: i32, month: u32 },
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Postproc(#[from] PostprocError),
}

/// Demand- and energy-charge rates with the daily on-peak window
/// (half-open, local clock).
#[derive(Debug, Clone, PartialEq)]
pub struct Tariff {
    pub r_nc: f64,
    pub r_op: f64,
    pub r_ec: f64,
    pub onpeak_start: NaiveTime,
    pub onpeak_end: NaiveTime,
}

impl Tariff {
    pub fn new(
        r_nc: f64,
        r_op: f64,
        r_ec: f64,
        onpeak_start: NaiveTime,
        onpeak_end: NaiveTime,
    ) -> Result<Self, MgError> {
        if r_nc < 0.0 || r_op < 0.0 || r_ec < 0.0 {
            return Err(MgError::BadParam("tariff rates must be nonnegative".into()));
        }
        if onpeak_start >= onpeak_end {
            return Err(MgError::BadParam("on-peak window is empty".into()));
        }
        Ok(Self {
            r_nc,
            r_op,
            r_ec,
            onpeak_start,
            onpeak_end,
        })
    }

    /// Port-of-San-Diego style rates: 24.48 / 19.19 $/kW, 0.1 $/kWh,
    /// on-peak 16:00-21:00.
    pub fn reference() -> Self {
        Self::new(
            24.48,
            19.19,
            0.1,
            NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            NaiveTime::from_hms_opt(21, 0, 0).unwrap(),
        )
        .unwrap()
    }

    /// Half-open membership: `[start, end)`.
    pub fn is_onpeak(&self, ts: NaiveDateTime) -> bool {
        let t = ts.time();
        t >= self.onpeak_start && t < self.onpeak_end
    }
}

/// Battery parameters and the simulation step length.
#[derive(Debug, Clone, PartialEq)]
pub struct BessSpec {
    pub energy_kwh: f64,
    pub power_kw: f64,
    pub eta: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub x_hat: f64,
    pub dt_hours: f64,
}

impl BessSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        energy_kwh: f64,
        power_kw: f64,
        eta: f64,
        soc_min: f64,
        soc_max: f64,
        x_hat: f64,
        dt_hours: f64,
    ) -> Result<Self, MgError> {
        if energy_kwh <= 0.0 || power_kw <= 0.0 || dt_hours <= 0.0 {
            return Err(MgError::BadParam(
                "energy, power and dt must be positive".into(),
            ));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(MgError::BadParam(format!(
                "round-trip efficiency {eta} outside (0, 1]"
            )));
        }
        if !(soc_min < soc_max) {
            return Err(MgError::BadParam("soc_min must be below soc_max".into()));
        }
        // One step may not sweep the whole SOC band.
        if dt_hours * power_kw / energy_kwh > soc_max - soc_min {
            return Err(MgError::BadParam(
                "dt * power / energy exceeds the SOC band".into(),
            ));
        }
        Ok(Self {
            energy_kwh,
            power_kw,
            eta,
            soc_min,
            soc_max,
            x_hat,
            dt_hours,
        })
    }

    /// The paper-table battery: 2,500 kWh / 700 kW, eta 0.8, SOC band
    /// 0.2-0.8, terminal 0.5, 15-minute steps.
    pub fn reference() -> Self {
        Self::new(2500.0, 700.0, 0.8, 0.2, 0.8, 0.5, 0.25).unwrap()
    }

    /// Same battery at a 1-hour step, the desk-scale resolution used by
    /// the year-long runs.
    pub fn reference_hourly() -> Self {
        Self::new(2500.0, 700.0, 0.8, 0.2, 0.8, 0.5, 1.0).unwrap()
    }

    /// SOC change per kW over one step.
    pub fn b11(&self) -> f64 {
        self.dt_hours / self.energy_kwh
    }
}

/// Builds the scalar-SO C system, constraints, and post-processing
/// configuration for the battery: `A = [1]`, `B = [dt/E, 0]`,
/// `E = [dt/E]`, power balance coupling `u1 - u2 = m(t) + w`, and the
/// two-sided SOC chance rows in joint mode.
pub fn build_mg_system(
    bess: &BessSpec,
    alpha: f64,
) -> Result<(LtiSystem, ConstraintSpec, PostProcessConfig), MgError> {
    let b11 = bess.b11();
    let sys = LtiSystem::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_row_slice(1, 2, &[b11, 0.0]),
        DMatrix::from_element(1, 1, b11),
    )?;
    let spec = ConstraintSpec::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
        DVector::from_row_slice(&[bess.power_kw, bess.power_kw]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_row_slice(&[bess.soc_max, -bess.soc_min]),
        DVector::from_row_slice(&[alpha, alpha]),
        Some(alpha),
        Some(DVector::from_element(1, bess.x_hat)),
    )?;
    let cfg = PostProcessConfig::from_system(&sys, 0, 1, (-bess.power_kw, bess.power_kw))?;
    Ok((sys, spec, cfg))
}

/// Assembles the dispatch objective for one horizon: NCDC peak over all
/// steps, OPDC peak over the on-peak steps, volumetric energy on grid
/// import, and the round-trip-loss term `(1-eta)/2` on battery power.
pub fn mg_objective(
    tariff: &Tariff,
    bess: &BessSpec,
    horizon_timestamps: &[NaiveDateTime],
) -> ObjectiveSpec {
    let n = horizon_timestamps.len();
    let mut obj = ObjectiveSpec::zeros(n, 2);
    let energy_w = tariff.r_ec * bess.dt_hours;
    let loss_w = energy_w * (1.0 - bess.eta) / 2.0;
    for k in 0..n {
        obj.linear_weights[k * 2 + 1] = energy_w;
        obj.abs_weights[k * 2] = loss_w;
    }
    obj.peak_groups.push(PeakGroup {
        label: "ncdc".into(),
        input_index: 1,
        steps: (0..n).collect(),
        rate: tariff.r_nc,
        floor_at_zero: true,
    });
    let op_steps: Vec<usize> = (0..n)
        .filter(|&k| tariff.is_onpeak(horizon_timestamps[k]))
        .collect();
    if !op_steps.is_empty() {
        obj.peak_groups.push(PeakGroup {
            label: "opdc".into(),
            input_index: 1,
            steps: op_steps,
            rate: tariff.r_op,
            floor_at_zero: true,
        });
    }
    obj
}

/// One month's realized bill. `total` excludes `bess_cycles`, which is a
/// wear indicator, not a cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyBill {
    pub year: i32,
    pub month: u32,
    pub ncdc: f64,
    pub opdc: f64,
    pub energy_cost: f64,
    pub bess_loss_cost: f64,
    pub total: f64,
    pub bess_cycles: f64,
}

/// Bills one calendar month of applied dispatch. Demand peaks are floored
/// at zero: exporting never earns a negative demand charge.
pub fn monthly_bill(
    timestamps: &[NaiveDateTime],
    u1_applied: &[f64],
    u2_applied: &[f64],
    tariff: &Tariff,
    bess: &BessSpec,
    year: i32,
    month: u32,
) -> Result<MonthlyBill, MgError> {
    let mut peak = 0.0_f64;
    let mut op_peak = 0.0_f64;
    let mut energy = 0.0;
    let mut throughput = 0.0;
    let mut seen = false;
    for i in 0..timestamps.len() {
        let ts = timestamps[i];
        if ts.year() != year || ts.month() != month {
            continue;
        }
        seen = true;
        peak = peak.max(u2_applied[i]);
        if tariff.is_onpeak(ts) {
            op_peak = op_peak.max(u2_applied[i]);
        }
        energy += u2_applied[i];
        throughput += u1_applied[i].abs();
    }
    if !seen {
        return Err(MgError::MonthNotCovered { year, month });
    }
    let ncdc = tariff.r_nc * peak.max(0.0);
    let opdc = tariff.r_op * op_peak.max(0.0);
    let energy_cost = tariff.r_ec * bess.dt_hours * energy;
    let bess_loss_cost = tariff.r_ec * bess.dt_hours * (1.0 - bess.eta) / 2.0 * throughput;
    Ok(MonthlyBill {
        year,
        month,
        ncdc,
        opdc,
        energy_cost,
        bess_loss_cost,
        total: ncdc + opdc + energy_cost + bess_loss_cost,
        bess_cycles: throughput * bess.dt_hours / (2.0 * bess.energy_kwh),
    })
}

/// Calendar months present in a timestamp column, in order.
pub fn months_covered(timestamps: &[NaiveDateTime]) -> Vec<(i32, u32)> {
    let mut out: Vec<(i32, u32)> = Vec::new();
    for ts in timestamps {
        let key = (ts.year(), ts.month());
        if out.last() != Some(&key) && !out.contains(&key) {
            out.push(key);
        }
    }
    out
}

/// Yearly totals: monthly costs added over the months.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct YearlySummary {
    pub ncdc: f64,
    pub opdc: f64,
    pub energy_cost: f64,
    pub bess_loss_cost: f64,
    pub total: f64,
    pub bess_cycles: f64,
}

pub fn sum_bills(bills: &[MonthlyBill]) -> YearlySummary {
    let mut s = YearlySummary::default();
    for b in bills {
        s.ncdc += b.ncdc;
        s.opdc += b.opdc;
        s.energy_cost += b.energy_cost;
        s.bess_loss_cost += b.bess_loss_cost;
        s.total += b.total;
        s.bess_cycles += b.bess_cycles;
    }
    s
}

impl YearlySummary {
    /// Formatted summary table with the standard row labels; `y_end` is
    /// the final time-average of violations.
    pub fn render_table(&self, label: &str, y_end: f64) -> String {
        let rows = [
            ("NCDC", format!("${:.0}", self.ncdc)),
            ("OPDC", format!("${:.0}", self.opdc)),
            ("Energy Cost", format!("${:.0}", self.energy_cost)),
            ("BESS loss", format!("${:.0}", self.bess_loss_cost)),
            ("Total Cost", format!("${:.0}", self.total)),
            ("Total BESS cycles", format!("{:.1}", self.bess_cycles)),
            ("Y at year end", format!("{:.1}%", 100.0 * y_end)),
        ];
        let mut out = format!("{label}\n");
        for (name, value) in rows {
            out.push_str(&format!("{name:<18} {value:>12}\n"));
        }
        out
    }
}

/// Mean-of-neighbors forecaster: compares the feature window against every
/// aligned historical window of the same length and averages the `k`
/// nearest windows' successor values per step.
pub fn knn_forecast(history: &[f64], feature: &[f64], k: usize) -> Result<Vec<f64>, MgError> {
    let w = feature.len();
    if k == 0 || w == 0 {
        return Err(MgError::BadParam("k and the feature window must be nonempty".into()));
    }
    if history.len() < k + 2 * w {
        return Err(MgError::InsufficientHistory {
            needed: k + 2 * w,
            got: history.len(),
        });
    }
    let candidates = history.len() - 2 * w + 1;
    let mut scored: Vec<(f64, usize)> = (0..candidates)
        .map(|j| {
            let d: f64 = history[j..j + w]
                .iter()
                .zip(feature.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, j)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let chosen = &scored[..k];
    let mut forecast = vec![0.0; w];
    for &(_, j) in chosen {
        for (i, f) in forecast.iter_mut().enumerate() {
            *f += history[j + w + i];
        }
    }
    for f in &mut forecast {
        *f /= k as f64;
    }
    Ok(forecast)
}

/// Forecast and realized PV/load series on a common timestamp grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub timestamps: Vec<NaiveDateTime>,
    pub pv_forecast: Vec<f64>,
    pub load_forecast: Vec<f64>,
    pub pv_actual: Vec<f64>,
    pub load_actual: Vec<f64>,
}

const CSV_HEADER: &str =
    "timestamp_iso8601,pv_forecast_kw,load_forecast_kw,pv_actual_kw,load_actual_kw";
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

impl ForecastSet {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Net-load forecast `PV_f - L_f` used as the coupling right-hand side.
    pub fn net_forecast(&self, i: usize) -> f64 {
        self.pv_forecast[i] - self.load_forecast[i]
    }

    /// Realized uncertainty `w = (PV_r - PV_f) - (L_r - L_f)`.
    pub fn uncertainty(&self, i: usize) -> f64 {
        (self.pv_actual[i] - self.pv_forecast[i]) - (self.load_actual[i] - self.load_forecast[i])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), MgError> {
        writeln!(out, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.timestamps[i].format(TS_FORMAT),
                self.pv_forecast[i],
                self.load_forecast[i],
                self.pv_actual[i],
                self.load_actual[i]
            )?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), MgError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, MgError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        {
            let headers = rdr.headers().map_err(csv_err)?;
            let expected: Vec<&str> = CSV_HEADER.split(',').collect();
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(MgError::Csv {
                    line: 1,
                    message: format!("header mismatch: expected {expected:?}, got {got:?}"),
                });
            }
        }
        let mut set = ForecastSet {
            timestamps: vec![],
            pv_forecast: vec![],
            load_forecast: vec![],
            pv_actual: vec![],
            load_actual: vec![],
        };
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| -> Result<&str, MgError> {
                rec.get(i).ok_or(MgError::Csv {
                    line,
                    message: format!("missing field {i}"),
                })
            };
            let ts = NaiveDateTime::parse_from_str(field(0)?, TS_FORMAT).map_err(|e| {
                MgError::Csv {
                    line,
                    message: format!("bad timestamp: {e}"),
                }
            })?;
            let num = |i: usize| -> Result<f64, MgError> {
                field(i)?.parse::<f64>().map_err(|e| MgError::Csv {
                    line,
                    message: format!("bad number in field {i}: {e}"),
                })
            };
            let (pf, lf, pa, la) = (num(1)?, num(2)?, num(3)?, num(4)?);
            if pf < 0.0 || lf < 0.0 || pa < 0.0 || la < 0.0 {
                return Err(MgError::Csv {
                    line,
                    message: "PV and load series must be nonnegative".into(),
                });
            }
            set.timestamps.push(ts);
            set.pv_forecast.push(pf);
            set.load_forecast.push(lf);
            set.pv_actual.push(pa);
            set.load_actual.push(la);
        }
        Ok(set)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, MgError> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn csv_err(e: csv::Error) -> MgError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    MgError::Csv {
        line,
        message: e.to_string(),
    }
}

/// Synthetic-scenario knobs. The defaults describe a port facility with an
/// evening-peaking load against a midday PV resource, sized so the battery
/// works its SOC band daily.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub load_base_kw: f64,
    pub load_amp_kw: f64,
    pub pv_peak_kw: f64,
    /// Stationary standard deviation of the actual-minus-forecast noise.
    pub sigma_w_kw: f64,
    /// AR(1) coefficient of the fast uncertainty processes.
    pub ar1: f64,
    /// Stationary standard deviation of the forecastable load-level noise.
    pub forecast_noise_kw: f64,
    /// AR(1) coefficient of the forecastable noise; close to one gives
    /// multi-day load regimes that the day-ahead forecast tracks.
    pub forecast_ar1: f64,
    pub dt_hours: f64,
    pub start: NaiveDate,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            load_base_kw: 160.0,
            load_amp_kw: 130.0,
            pv_peak_kw: 300.0,
            sigma_w_kw: 25.0,
            ar1: 0.9,
            forecast_noise_kw: 15.0,
            forecast_ar1: 0.9,
            dt_hours: 1.0,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
        }
    }
}

/// Deterministic synthetic scenario: load is a base plus an
/// evening-peaking diurnal sinusoid plus AR(1) noise; PV is a daylight
/// bell curve scaled by a per-day cloud factor; actuals add AR(1)
/// uncertainty (PV noise masked by daylight). All series clamp at zero.
pub fn synth_scenario(seed: u64, days: usize, params: &SynthParams) -> Result<ForecastSet, MgError> {
    if days == 0 {
        return Err(MgError::BadParam("days must be positive".into()));
    }
    if params.dt_hours <= 0.0 || (24.0 / params.dt_hours).fract() != 0.0 {
        return Err(MgError::BadParam(format!(
            "dt_hours = {} must divide 24",
            params.dt_hours
        )));
    }
    if !(0.0..1.0).contains(&params.ar1) || !(0.0..1.0).contains(&params.forecast_ar1) {
        return Err(MgError::BadParam(format!(
            "AR(1) coefficients {} / {} must lie in [0, 1)",
            params.ar1, params.forecast_ar1
        )));
    }
    if params.sigma_w_kw < 0.0 || params.forecast_noise_kw < 0.0 {
        return Err(MgError::BadParam("noise levels must be nonnegative".into()));
    }
    let spd = (24.0 / params.dt_hours) as usize;
    let steps = days * spd;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = params.start.and_hms_opt(0, 0, 0).unwrap();

    let cloud: Vec<f64> = (0..days).map(|_| rng.gen_range(0.15..1.0)).collect();
    let ar = |rho: f64, sigma: f64, state: &mut f64, rng: &mut ChaCha8Rng| {
        let z: f64 = rng.sample(StandardNormal);
        *state = rho * *state + (1.0 - rho * rho).sqrt() * sigma * z;
        *state
    };
    let mut e_fc = {
        let z: f64 = rng.sample(StandardNormal);
        params.forecast_noise_kw * z
    };
    let mut e_load = {
        let z: f64 = rng.sample(StandardNormal);
        params.sigma_w_kw * z
    };
    let mut e_pv = {
        let z: f64 = rng.sample(StandardNormal);
        params.sigma_w_kw * z
    };

    let mut set = ForecastSet {
        timestamps: Vec::with_capacity(steps),
        pv_forecast: Vec::with_capacity(steps),
        load_forecast: Vec::with_capacity(steps),
        pv_actual: Vec::with_capacity(steps),
        load_actual: Vec::with_capacity(steps),
    };
    for s in 0..steps {
        let ts = start + chrono::Duration::seconds((s as f64 * params.dt_hours * 3600.0) as i64);
        let hour = ts.time().hour() as f64 + ts.time().minute() as f64 / 60.0;
        let day = s / spd;

        // Evening-peaking sinusoid (peak 18:30, trough 06:30).
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 12.5) / 24.0).sin();
        let load_f = (params.load_base_kw
            + params.load_amp_kw * diurnal
            + ar(params.forecast_ar1, params.forecast_noise_kw, &mut e_fc, &mut rng))
        .max(0.0);

        // Daylight bell, 06:00-18:00.
        let bell = ((std::f64::consts::PI * (hour - 6.0) / 12.0).sin().max(0.0)).powi(2);
        let pv_f = (params.pv_peak_kw * cloud[day] * bell).max(0.0);

        let load_a =
            (load_f + ar(params.ar1, params.sigma_w_kw, &mut e_load, &mut rng)).max(0.0);
        let pv_a =
            (pv_f + bell * ar(params.ar1, params.sigma_w_kw, &mut e_pv, &mut rng)).max(0.0);

        set.timestamps.push(ts);
        set.pv_forecast.push(pv_f);
        set.load_forecast.push(load_f);
        set.pv_actual.push(pv_a);
        set.load_actual.push(load_a);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ts(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, min, 0)
            .unwrap()
    }

    #[test]
    fn reference_system_matrices() {
        let bess = BessSpec::reference();
        let (sys, spec, cfg) = build_mg_system(&bess, 0.1).unwrap();
        assert_abs_diff_eq!(sys.b()[(0, 0)], 1e-4, epsilon = 1e-18);
        assert_eq!(sys.b()[(0, 1)], 0.0);
        assert_abs_diff_eq!(cfg.d_mat[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(cfg.d_mat[(1, 0)], 0.0);
        assert_eq!(spec.g_vec, DVector::from_row_slice(&[0.8, -0.2]));
        assert_eq!(spec.jcc_alpha, Some(0.1));
    }

    #[test]
    fn objective_weights_from_reference_rates() {
        let tariff = Tariff::reference();
        let bess = BessSpec::reference();
        let stamps: Vec<NaiveDateTime> = (0..96).map(|k| ts(2019, 6, 1, 0, 0) + chrono::Duration::minutes(15 * k)).collect();
        let obj = mg_objective(&tariff, &bess, &stamps);
        // (1 - 0.8)/2 * 0.1 $/kWh * 0.25 h = 0.0025 $/kW per step.
        assert_abs_diff_eq!(obj.abs_weights[0], 0.0025, epsilon = 1e-15);
        assert_abs_diff_eq!(obj.linear_weights[1], 0.025, epsilon = 1e-15);
        assert_eq!(obj.peak_groups.len(), 2);
        // Midnight start: on-peak covers indices 64..=83.
        let op: Vec<usize> = (64..84).collect();
        assert_eq!(obj.peak_groups[1].steps, op);
    }

    #[test]
    fn onpeak_group_wraps_across_midnight() {
        let tariff = Tariff::reference();
        let bess = BessSpec::reference();
        let start = ts(2019, 6, 1, 17, 0);
        let stamps: Vec<NaiveDateTime> =
            (0..96).map(|k| start + chrono::Duration::minutes(15 * k)).collect();
        let obj = mg_objective(&tariff, &bess, &stamps);
        let op = &obj.peak_groups[1].steps;
        // Today's remaining 17:00-21:00 is steps 0..16, tomorrow's
        // 16:00-21:00 window starts 23 h in: steps 92..96.
        assert!(op.contains(&0) && op.contains(&15));
        assert!(!op.contains(&16));
        assert!(op.contains(&92) && op.contains(&95));
        assert_eq!(op.len(), 16 + 4);
    }

    #[test]
    fn onpeak_window_is_half_open() {
        let tariff = Tariff::reference();
        assert!(tariff.is_onpeak(ts(2019, 3, 5, 16, 0)));
        assert!(tariff.is_onpeak(ts(2019, 3, 5, 20, 45)));
        assert!(!tariff.is_onpeak(ts(2019, 3, 5, 21, 0)));
        assert!(!tariff.is_onpeak(ts(2019, 3, 5, 15, 45)));
    }

    fn flat_month(u2_offpeak: f64, u2_onpeak: f64) -> (Vec<NaiveDateTime>, Vec<f64>, Vec<f64>) {
        let tariff = Tariff::reference();
        let start = ts(2019, 4, 1, 0, 0);
        let steps = 30 * 96;
        let mut stamps = Vec::with_capacity(steps);
        let mut u2 = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = start + chrono::Duration::minutes(15 * k as i64);
            stamps.push(t);
            u2.push(if tariff.is_onpeak(t) { u2_onpeak } else { u2_offpeak });
        }
        let u1 = vec![0.0; steps];
        (stamps, u1, u2)
    }

    #[test]
    fn billing_worked_example_flat_import() {
        let (stamps, u1, u2) = flat_month(100.0, 100.0);
        let bill = monthly_bill(
            &stamps,
            &u1,
            &u2,
            &Tariff::reference(),
            &BessSpec::reference(),
            2019,
            4,
        )
        .unwrap();
        assert_abs_diff_eq!(bill.ncdc, 2448.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bill.energy_cost, 7200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bill.bess_loss_cost, 0.0);
        assert_abs_diff_eq!(bill.bess_cycles, 0.0);
        assert_abs_diff_eq!(
            bill.total,
            bill.ncdc + bill.opdc + bill.energy_cost + bill.bess_loss_cost,
            epsilon = 1e-12
        );
    }

    #[test]
    fn billing_worked_example_onpeak_peak() {
        let (stamps, u1, u2) = flat_month(100.0, 50.0);
        let bill = monthly_bill(
            &stamps,
            &u1,
            &u2,
            &Tariff::reference(),
            &BessSpec::reference(),
            2019,
            4,
        )
        .unwrap();
        assert_abs_diff_eq!(bill.opdc, 959.50, epsilon = 1e-9);
        assert!(bill.opdc <= bill.ncdc);
    }

    #[test]
    fn one_full_cycle_from_throughput() {
        // 5,000 kWh of |u1| dt throughput over a 2,500 kWh battery is one
        // charge-discharge cycle.
        let start = ts(2019, 4, 1, 0, 0);
        let steps = 20_000 / 700 + 1; // enough steps at 700 kW, 0.25 h
        let stamps: Vec<NaiveDateTime> =
            (0..steps).map(|k| start + chrono::Duration::minutes(15 * k as i64)).collect();
        let mut u1 = vec![0.0; steps];
        let mut remaining = 20_000.0_f64; // kW-steps -> 5,000 kWh at 0.25 h
        for v in u1.iter_mut() {
            let take = remaining.min(700.0);
            *v = take;
            remaining -= take;
        }
        assert_eq!(remaining, 0.0);
        let u2 = vec![0.0; steps];
        let bill = monthly_bill(
            &stamps,
            &u1,
            &u2,
            &Tariff::reference(),
            &BessSpec::reference(),
            2019,
            4,
        )
        .unwrap();
        assert_abs_diff_eq!(bill.bess_cycles, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn export_earns_no_negative_demand_charge() {
        let (stamps, u1, mut u2) = flat_month(100.0, 100.0);
        for v in u2.iter_mut() {
            *v = -50.0;
        }
        let bill = monthly_bill(
            &stamps,
            &u1,
            &u2,
            &Tariff::reference(),
            &BessSpec::reference(),
            2019,
            4,
        )
        .unwrap();
        assert_eq!(bill.ncdc, 0.0);
        assert_eq!(bill.opdc, 0.0);
        assert!(bill.energy_cost < 0.0);
    }

    #[test]
    fn missing_month_is_an_error() {
        let (stamps, u1, u2) = flat_month(100.0, 100.0);
        let err = monthly_bill(
            &stamps,
            &u1,
            &u2,
            &Tariff::reference(),
            &BessSpec::reference(),
            2019,
            7,
        );
        assert!(matches!(err, Err(MgError::MonthNotCovered { .. })));
    }

    #[test]
    fn knn_exact_match_returns_successor() {
        let day_a = [1.0, 2.0, 3.0, 4.0];
        let day_b = [9.0, 8.0, 7.0, 6.0];
        let day_c = [2.0, 2.0, 2.0, 2.0];
        let mut history = Vec::new();
        history.extend_from_slice(&day_a);
        history.extend_from_slice(&day_b);
        history.extend_from_slice(&day_c);
        let forecast = knn_forecast(&history, &day_a, 1).unwrap();
        assert_eq!(forecast, day_b.to_vec());
    }

    #[test]
    fn knn_constant_history_is_constant() {
        let history = vec![5.0; 64];
        let feature = vec![5.0; 8];
        for k in [1, 3, 7] {
            let f = knn_forecast(&history, &feature, k).unwrap();
            assert!(f.iter().all(|&v| (v - 5.0).abs() < 1e-12));
        }
    }

    #[test]
    fn knn_averages_the_k_nearest_successors() {
        // Window length 2. History arranged so candidates j = 0, 2, 4 are
        // nearest to the feature [0, 0]; their successor windows are
        // [1, 1], [3, 3], [5, 5] -> mean [3, 3].
        let history = vec![
            0.0, 0.0, // j=0, d=0, successor [1, 1]
            1.0, 1.0, // j=2 ... wait: sliding windows overlap
        ];
        drop(history);
        // Build explicitly: history[j..j+2] feature, history[j+2..j+4]
        // successor, sliding j. Choose values so distances are known.
        let history = vec![0.1, 0.1, 3.0, 3.0, 0.2, 0.2, 5.0, 5.0, 9.0, 9.0];
        // Candidates (w=2): j=0 [.1,.1] d=0.02; j=1 [.1,3] d~9; j=2 [3,3];
        // j=3 [3,.2]; j=4 [.2,.2] d=0.08; j=5 [.2,5]; j=6 [5,5].
        let feature = [0.0, 0.0];
        let f = knn_forecast(&history, &feature, 3).unwrap();
        // Nearest three: j=0 (succ [3,3]), j=4 (succ [5,5]), then the
        // smallest of the rest: j=1 d=0.01+8.41=8.42? compute: [.1,3] vs
        // [0,0] = 0.01+9 = 9.01; j=3 [3,.2] = 9+0.04 = 9.04; j=2 [3,3] =
        // 18; j=5 [.2,5] = 25.04; j=6 50. So third is j=1, succ [3,.2]
        // -> wait succ of j=1 is history[3..5] = [3.0, 0.2].
        let expected = [(3.0 + 5.0 + 3.0) / 3.0, (3.0 + 5.0 + 0.2) / 3.0];
        assert_abs_diff_eq!(f[0], expected[0], epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], expected[1], epsilon = 1e-12);
    }

    #[test]
    fn knn_needs_enough_history() {
        let err = knn_forecast(&[1.0; 10], &[1.0; 4], 3);
        assert!(matches!(err, Err(MgError::InsufficientHistory { .. })));
    }

    #[test]
    fn synth_zero_noise_collapses_actuals() {
        let params = SynthParams {
            sigma_w_kw: 0.0,
            ..Default::default()
        };
        let set = synth_scenario(7, 3, &params).unwrap();
        for i in 0..set.len() {
            assert_abs_diff_eq!(set.pv_actual[i], set.pv_forecast[i], epsilon = 1e-12);
            assert_abs_diff_eq!(set.load_actual[i], set.load_forecast[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let params = SynthParams::default();
        let a = synth_scenario(42, 5, &params).unwrap();
        let b = synth_scenario(42, 5, &params).unwrap();
        assert_eq!(a, b);
        let c = synth_scenario(43, 5, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_uncertainty_std_near_target() {
        let params = SynthParams {
            sigma_w_kw: 50.0,
            ..Default::default()
        };
        let set = synth_scenario(REFERENCE_SEED, 365, &params).unwrap();
        let diffs: Vec<f64> = (0..set.len())
            .map(|i| set.load_actual[i] - set.load_forecast[i])
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / (diffs.len() - 1) as f64;
        let std = var.sqrt();
        assert!(
            (std - 50.0).abs() / 50.0 < 0.2,
            "sample std {std} more than 20% from 50"
        );
    }

    #[test]
    fn synth_series_are_nonnegative() {
        let set = synth_scenario(3, 30, &SynthParams::default()).unwrap();
        for i in 0..set.len() {
            assert!(set.pv_forecast[i] >= 0.0);
            assert!(set.load_forecast[i] >= 0.0);
            assert!(set.pv_actual[i] >= 0.0);
            assert!(set.load_actual[i] >= 0.0);
        }
    }

    #[test]
    fn forecast_csv_round_trip() {
        let set = synth_scenario(11, 2, &SynthParams::default()).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        let back = ForecastSet::read_csv(&buf[..]).unwrap();
        assert_eq!(set.timestamps, back.timestamps);
        for i in 0..set.len() {
            assert_abs_diff_eq!(set.pv_forecast[i], back.pv_forecast[i], epsilon = 1e-9);
            assert_abs_diff_eq!(set.load_actual[i], back.load_actual[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = format!("{CSV_HEADER}\n2019-01-01T00:00:00,1,2,3,4\nnot-a-date,1,2,3,4\n");
        let err = ForecastSet::read_csv(text.as_bytes()).unwrap_err();
        match err {
            MgError::Csv { line, .. } => assert_eq!(line, 3),
            other => panic!("expected CSV error, got {other}"),
        }
    }

    #[test]
    fn months_covered_in_order() {
        let stamps = vec![
            ts(2019, 1, 31, 23, 45),
            ts(2019, 2, 1, 0, 0),
            ts(2019, 2, 15, 0, 0),
            ts(2019, 3, 1, 0, 0),
        ];
        assert_eq!(
            months_covered(&stamps),
            vec![(2019, 1), (2019, 2), (2019, 3)]
        );
    }
}
