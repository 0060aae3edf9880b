//! Full-year reference run of OA-SMPC 1 (about ten seconds).
//!
//! Writes the trace, monthly bills, yearly summary, and plot-data CSVs to
//! `out_year/`, then prints the summary table and the quarterly evolution
//! of the violation average against its target.

use oasmpc::sim::{run_simulation, write_outputs, RunConfig, TestCase};

fn main() {
    let mut cfg = RunConfig::reference(TestCase::OaSmpc1);
    cfg.out_dir = Some("out_year".into());

    let t = std::time::Instant::now();
    let trace = run_simulation(&cfg).unwrap();
    println!("simulated {} steps in {:?}", trace.rows.len(), t.elapsed());

    let files = write_outputs(&trace, &cfg).unwrap();
    let summary = trace.year_summary(&cfg.tariff, &cfg.bess).unwrap();
    print!("{}", summary.render_table("OA-SMPC 1, reference year", trace.final_y()));

    println!("\nquarterly Y (target alpha = {}):", cfg.alpha);
    for q in 1..=4 {
        let idx = q * trace.rows.len() / 4 - 1;
        let r = &trace.rows[idx];
        println!("  {}  Y = {:.4}  h = [{:.4}, {:.4}]", r.timestamp.format("%Y-%m-%d"), r.y, r.h1, r.h2);
    }
    println!("\noutputs: {}", files.trace_csv.parent().unwrap().display());
}
