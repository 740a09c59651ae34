//! The mirror-prox sliding method.
//!
//! Outer iterations take one gradient step on the smooth part `G`; inner
//! iterations run extragradient (mirror-prox) steps on the operator `H`
//! against two prox anchors. Only `H` is queried inside the inner loop.

mod mps;
mod problem;
mod schedule;
mod trace;

pub use mps::{mps_run, mps_run_with, q_gap, smps_run, smps_run_with, Diagnostics, Monitor, RunOptions};
pub use problem::{
    AffineOperator, FnOperator, NoiseModel, Operator, OracleConstants, QuadraticTerm, SmoothTerm, VIProblem,
    ZeroTerm,
};
pub use schedule::{
    deterministic_gap_bound, deterministic_outer_iterations, stochastic_gap_bound, stochastic_outer_iterations,
    SlidingSchedule, STOCHASTIC_BOUND_CONSTANT,
};
pub use trace::{IterationRecord, RunTrace, Snapshot, TRACE_COLUMNS};
