//! Mini study: all four controllers across two seeds, 30 days each,
//! run concurrently.

use oasmpc::sim::{sweep, RunConfig, ScenarioSource, TestCase};

fn main() {
    let mut base = RunConfig::reference(TestCase::OaSmpc1);
    if let ScenarioSource::Synthetic { seed, params, .. } = &base.scenario {
        base.scenario = ScenarioSource::Synthetic {
            seed: *seed,
            days: 30,
            params: params.clone(),
        };
    }
    base.restart_step = Some(15 * 24); // mid-run restart for oasmpc2

    let t = std::time::Instant::now();
    let mut runs = sweep(&base, &[7, 8], &TestCase::ALL).unwrap();
    runs.sort_by_key(|(s, c, _)| (*s, c.as_str()));

    println!("case          seed   total_cost   cycles   y_end");
    for (seed, case, trace) in &runs {
        let summary = trace.year_summary(&base.tariff, &base.bess).unwrap();
        println!(
            "{:<13} {:>4}   {:>10.2}   {:>6.1}   {:.3}",
            case.as_str(),
            seed,
            summary.total,
            summary.bess_cycles,
            trace.final_y()
        );
    }
    println!("8 month-long runs in {:?}", t.elapsed());
}
