//! Ideal-control convergence of the violation time-average.
//!
//! Runs the exact-rational oracle from three starting averages and shows
//! |Y - alpha| shrinking inside the vanishing critical region; writes one
//! full trace to `oracle_trace.csv`.

use oasmpc::theory::{critical_region, run_ideal_oracle, to_f64, Rational};

fn main() {
    let alpha = Rational::new(1, 10);
    for y0 in [Rational::new(0, 1), Rational::new(1, 2), Rational::new(1, 1)] {
        let trace = run_ideal_oracle(alpha, y0, 9, 10_000).unwrap();
        let t_final = trace.final_t as f64;
        let bound = 1.0 / t_final + 1.0 / (2.0 * t_final + 1.0);
        let inside_steps = trace.rows.iter().filter(|r| r.inside_kappa).count();
        println!(
            "y0 = {:>4}: final |Y - alpha| = {:.3e} (bound {bound:.3e}), {} of {} steps inside kappa",
            format!("{y0}"),
            to_f64(trace.final_z()),
            inside_steps,
            trace.rows.len()
        );
    }

    for t in [9u64, 99, 999, 9_999] {
        let k = critical_region(0.1, t).unwrap();
        println!("kappa(0.1, {t:>5}) = ({:.5}, {:.5}), width {:.2e}", k.lower, k.upper, k.width);
    }

    let trace = run_ideal_oracle(alpha, Rational::new(1, 1), 9, 2_000).unwrap();
    let path = "oracle_trace.csv";
    trace
        .write_csv(std::io::BufWriter::new(std::fs::File::create(path).unwrap()))
        .unwrap();
    println!("trace from y0 = 1 written to {path}");
}
