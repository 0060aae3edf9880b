//! One nominal dispatch solve at the full 96-step, 15-minute resolution.
//!
//! Builds the reference battery system, stacks a one-day horizon against a
//! synthetic net-load forecast, solves the LP, and reports the plan.

use chrono::Duration;
use nalgebra::DVector;
use oasmpc::lti::stack_horizon;
use oasmpc::microgrid::{build_mg_system, mg_objective, synth_scenario, BessSpec, SynthParams, Tariff};
use oasmpc::mpc::solve_step;

fn main() {
    let bess = BessSpec::reference(); // 2,500 kWh / 700 kW at dt = 0.25 h
    let tariff = Tariff::reference();
    let (sys, spec, _) = build_mg_system(&bess, 0.1).unwrap();

    let params = SynthParams {
        dt_hours: bess.dt_hours,
        ..Default::default()
    };
    let scenario = synth_scenario(7, 2, &params).unwrap();
    let n = 96;
    let forecast: Vec<DVector<f64>> = (0..n)
        .map(|k| DVector::from_element(1, scenario.net_forecast(k)))
        .collect();
    let stamps: Vec<_> = (0..n)
        .map(|k| scenario.timestamps[0] + Duration::minutes(15 * k as i64))
        .collect();

    let h = DVector::from_row_slice(&[-0.1, -0.1]);
    let data = stack_horizon(&sys, &spec, n, &forecast, &h).unwrap();
    let objective = mg_objective(&tariff, &bess, &stamps);
    let x0 = DVector::from_element(1, 0.5);

    let t = std::time::Instant::now();
    let res = solve_step(&data, &objective, &x0).unwrap();
    println!("solved {n}-step dispatch LP in {:?}", t.elapsed());
    println!("objective            = ${:.2}", res.objective);
    println!("first battery input  = {:.1} kW", res.first_input[0]);
    println!("first grid import    = {:.1} kW", res.first_input[1]);

    let soc_min = res.predicted_states.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
    let soc_max = res.predicted_states.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max);
    let peak = res.planned_inputs.iter().map(|u| u[1]).fold(f64::NEG_INFINITY, f64::max);
    println!("planned SOC range    = [{soc_min:.3}, {soc_max:.3}] (design band [0.1, 0.9])");
    println!("planned import peak  = {peak:.1} kW");
    println!("terminal SOC         = {:.3} (bound {})", res.predicted_states[n - 1][0], 0.5);
}
