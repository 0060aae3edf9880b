//! Linear programs with weighted max and absolute-value objective terms.
//!
//! Builds a tiny dispatch-flavored LP: two free "import" variables tied to
//! fixed net loads, a floored peak charge over both, and an
//! absolute-value loss on a battery variable, then solves and prints the
//! standard-form dump.

use oasmpc::lp::{solve_lp, LinearProgram};

fn main() {
    let mut lp = LinearProgram::new();
    let batt = lp.add_var("battery_kw", -100.0, 100.0, 0.0).unwrap();
    let imp0 = lp.add_var("import(0)", f64::NEG_INFINITY, f64::INFINITY, 0.025).unwrap();
    let imp1 = lp.add_var("import(1)", f64::NEG_INFINITY, f64::INFINITY, 0.025).unwrap();

    // Power balance at two steps against fixed net loads of 80 and 150 kW;
    // the battery helps only at the second step.
    lp.add_eq("balance(0)", &[(imp0, 1.0)], 80.0).unwrap();
    lp.add_eq("balance(1)", &[(imp1, 1.0), (batt, 1.0)], 150.0).unwrap();

    // Peak demand charge over both imports, floored at zero, plus a
    // round-trip loss on battery throughput.
    let peak = lp.add_max_epigraph("peak", &[imp0, imp1], 24.48, true).unwrap();
    let loss = lp.add_abs_epigraph(batt, 0.0025).unwrap();

    println!("{}", lp.dump());
    let sol = solve_lp(&lp);
    assert!(sol.is_optimal(), "unexpected status {:?}", sol.status);
    println!("objective        = {:.4}", sol.objective);
    println!("battery          = {:.2} kW", sol.primal[batt]);
    println!("imports          = [{:.2}, {:.2}] kW", sol.primal[imp0], sol.primal[imp1]);
    println!("peak auxiliary   = {:.2} kW", sol.primal[peak]);
    println!("|battery| aux    = {:.2} kW", sol.primal[loss]);
}
