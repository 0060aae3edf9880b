//! Online adaptive stochastic MPC (OA-SMPC) for discrete LTI systems with
//! hard input constraints and chance constraints on states, plus the
//! grid-connected microgrid battery-dispatch case study it was built for.
//!
//! Instead of tightening state constraints against uncertainty, the
//! controller *relaxes* them by a nonpositive parameter `h(t)` updated
//! online from the time-average of past constraint violations, driving
//! that average toward the allowed violation probability. A closed-loop
//! post-processing step splits realized forecast errors between a primary
//! source (battery power, clamped to the time-varying design limits) and a
//! secondary source (grid import) so the power balance always holds.
//!
//! # Modules
//!
//! - [`lti`] — system/constraint data and horizon stacking
//! - [`lp`] — LP representation, epigraph helpers, built-in simplex solver
//! - [`mpc`] — nominal problem construction and per-step solving
//! - [`adapt`] — violation tracking and the online `h` update rule
//! - [`postproc`] — closed-loop correction for realized uncertainty
//! - [`theory`] — critical region, ideal-control oracle, convergence checks
//! - [`microgrid`] — case-study data: tariff, battery, billing, forecasts
//! - [`sim`] — end-to-end runs of the four benchmark controllers
//!
//! # Examples
//!
//! One runnable example per capability lives in `examples/`:
//!
//! ```text
//! cargo run --example lp_epigraph         # LP + max/abs epigraph terms
//! cargo run --example one_step_mpc        # a single 96-step dispatch solve
//! cargo run --example adaptive_relaxation # the h update rule in isolation
//! cargo run --example ideal_oracle        # ideal-policy convergence trace
//! cargo run --example knn_forecast        # nearest-neighbor load forecast
//! cargo run --example two_week_run        # closed-loop comparison, 14 days
//! cargo run --example case_sweep          # seeds x cases mini-study
//! cargo run --example year_run            # full-year reference run (~10 s)
//! ```
//!
//! The batch driver binary (`oasmpc`) wraps [`sim`] with `run`, `sweep`,
//! `oracle`, and `verify` subcommands; see the README for the
//! configuration-file format.

pub mod adapt;
pub mod lp;
pub mod lti;
pub mod microgrid;
pub mod mpc;
pub mod postproc;
pub mod selfcheck;
pub mod sim;
pub mod theory;

pub use adapt::{AdaptiveState, ViolationRecord};
pub use lp::{LinearProgram, LpSolution, LpStatus};
pub use lti::{ConstraintSpec, HorizonData, LtiSystem};
pub use microgrid::{BessSpec, ForecastSet, MonthlyBill, SynthParams, Tariff};
pub use mpc::{MpcStepResult, ObjectiveSpec};
pub use postproc::{ClosedLoopStep, PostProcessConfig};
pub use sim::{RunConfig, SimulationTrace, TestCase};
pub use theory::{CriticalRegion, OracleTrace};
