//! Two-week closed-loop comparison: hard bounds vs adaptive relaxation.
//!
//! Runs Traditional 1 and OA-SMPC 1 on the same 14-day synthetic scenario
//! and prints both bills plus the violation statistics.

use oasmpc::sim::{run_simulation, RunConfig, ScenarioSource, TestCase};

fn main() {
    for case in [TestCase::Traditional1, TestCase::OaSmpc1] {
        let mut cfg = RunConfig::reference(case);
        if let ScenarioSource::Synthetic { seed, params, .. } = &cfg.scenario {
            cfg.scenario = ScenarioSource::Synthetic {
                seed: *seed,
                days: 14,
                params: params.clone(),
            };
        }
        let trace = run_simulation(&cfg).unwrap();
        let summary = trace.year_summary(&cfg.tariff, &cfg.bess).unwrap();
        print!("{}", summary.render_table(&format!("--- {case} (14 days)"), trace.final_y()));
        let violations: u32 = trace.rows.iter().map(|r| r.v as u32).sum();
        let min_soc = trace.rows.iter().map(|r| r.x).fold(f64::INFINITY, f64::min);
        println!("violations: {violations} of {} steps, lowest SOC {min_soc:.3}\n", trace.rows.len());
    }
}
