//! Mirror-prox sliding for non-smooth saddle-point problems, with a simulated
//! decentralized harness.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | feasible sets, Bregman divergences, the two-anchor prox step |
//! | [`solver`] | the sliding method (deterministic and stochastic), schedules, traces |
//! | [`network`] | topologies, gossip matrices, spectral constants, communication rounds |
//! | [`penalty`] | stacked saddle problems and their consensus-penalty reformulation |
//! | [`problems`] | concrete instance families, gap oracles, oracle certification |
//! | [`harness`] | run configuration, end-to-end experiments, output files |
//!
//! The variational inequality being solved is
//! `<H(z) + ∇G(z), z* - z> <= 0` for all feasible `z`, where `G` is convex and
//! `L`-smooth and `H` is monotone and satisfies the inexact condition
//! `<H(z1) - H(z2), z1 - z3> <= M/2 |z1 - z2|^2 + M/2 |z1 - z3|^2 + delta`.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod network;
pub mod penalty;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Dgf, FeasibleSet, GeometrySpec, Point};
pub use network::{NetworkModel, Topology};
pub use penalty::{PenaltyCoefficients, StackedSpp};
pub use solver::{
    mps_run, q_gap, smps_run, NoiseModel, OracleConstants, RunTrace, SlidingSchedule, VIProblem,
};
