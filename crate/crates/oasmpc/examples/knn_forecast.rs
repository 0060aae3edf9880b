//! Nearest-neighbor day-ahead load forecasting.
//!
//! Trains on ten weeks of synthetic hourly load, forecasts the following
//! day from the latest 24-hour feature window, and compares against the
//! realized day and a naive persistence forecast.

use oasmpc::microgrid::{knn_forecast, synth_scenario, SynthParams};

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}

fn main() {
    let params = SynthParams::default();
    let scenario = synth_scenario(17, 71, &params).unwrap();
    let load = &scenario.load_actual;
    let spd = 24;

    // History: everything up to the second-to-last day. Feature: the last
    // history day. Target: the final day.
    let split = load.len() - spd;
    let history = &load[..split];
    let feature = &history[history.len() - spd..];
    let target = &load[split..];

    for k in [1, 5, 29] {
        let forecast = knn_forecast(history, feature, k).unwrap();
        println!("k = {k:>2}: RMSE vs realized day = {:.1} kW", rmse(&forecast, target));
    }
    println!("persistence (yesterday = today): RMSE = {:.1} kW", rmse(feature, target));
}
