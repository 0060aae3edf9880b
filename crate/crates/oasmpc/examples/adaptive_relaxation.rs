//! The online relaxation update in isolation.
//!
//! Feeds a violation pattern to the tracker: quiet start, trigger at the
//! bound, a burst of violations (h contracts), then a quiet stretch
//! (h relaxes), with an on-peak freeze rejecting one increase.

use nalgebra::{DMatrix, DVector};
use oasmpc::adapt::{apply_onpeak_freeze, AdaptiveState};
use oasmpc::lti::ConstraintSpec;

fn main() {
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
    .unwrap();
    let mut state = AdaptiveState::new(
        DVector::from_element(2, 0.1),
        Some(0.1),
        DVector::from_element(2, 15.0),
        0.001,
        DVector::zeros(2),
        DVector::from_element(2, -0.1),
        DVector::from_row_slice(&[-0.2, -0.2]),
    )
    .unwrap();

    // Two quiet steps, then SOC touches the upper bound: trigger fires.
    for x in [0.5, 0.65, 0.8] {
        let rec = state.observe_state(&DVector::from_element(1, x), &spec);
        state.check_trigger(&DVector::from_element(1, x), &spec, 1e-6);
        println!(
            "t={:<3} x={x:<5} V={} Y={:.3} triggered={} h={:.4}",
            state.t(),
            rec.jcc as u8,
            state.joint_y(),
            state.triggered(),
            state.h()[0]
        );
    }

    // Violation burst followed by quiet steps; freeze one on-peak update.
    let xs = [0.85, 0.83, 0.9, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
    for (i, &x) in xs.iter().enumerate() {
        let rec = state.observe_state(&DVector::from_element(1, x), &spec);
        let candidate = state.update_h().unwrap();
        let onpeak = i == 6;
        let frozen = apply_onpeak_freeze(&candidate, state.h(), onpeak);
        let note = if onpeak && frozen != candidate {
            " (on-peak freeze rejected the increase)"
        } else {
            ""
        };
        state.set_h(frozen).unwrap();
        println!(
            "t={:<3} x={x:<5} V={} Y={:.3} h={:.5}{note}",
            state.t(),
            rec.jcc as u8,
            state.joint_y(),
            state.h()[0]
        );
    }
}
