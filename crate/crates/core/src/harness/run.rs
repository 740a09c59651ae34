use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModeSpec, ProblemSpec, RunConfig};
use crate::error::Result;
use crate::geometry::{omega_sq_bound, Point};
use crate::network::{consensus_violation, NetworkModel};
use crate::penalty::{build_penalized_vi, penalty_coefficients, OracleModel, PenaltyCoefficients};
use crate::problems::io::read_instance;
use crate::problems::{
    certify_inexact_oracle, matching_pennies, operator_bound_l0, random_l1_saddle, random_matrix_game,
    CertificateReport, Instance,
};
use crate::solver::{
    deterministic_gap_bound, deterministic_outer_iterations, mps_run_with, smps_run_with, stochastic_gap_bound,
    stochastic_outer_iterations, Diagnostics, RunOptions, RunTrace, SlidingSchedule, VIProblem,
};

/// Samples used to estimate `L0` for families without an analytic bound.
pub const L0_SAMPLES: usize = 10_000;

/// Everything built from a config before the solver runs.
#[derive(Clone, Debug)]
pub struct Setup {
    pub instance: Instance,
    pub network: NetworkModel,
    pub coefficients: PenaltyCoefficients,
    pub l0: f64,
    pub problem: VIProblem,
    pub z0: Point,
    pub omega_sq: f64,
}

/// Builds the instance, network, penalty and VI; the starting point is a
/// random feasible point drawn from the problem seed.
pub fn build_setup(config: &RunConfig) -> Result<Setup> {
    config.validate()?;
    let m = config.network.m;
    let instance = match &config.problem {
        ProblemSpec::MatchingPennies { .. } => Instance::MatrixGame(matching_pennies(m)?),
        ProblemSpec::RandomMatrixGame { dx, dy, seed } => Instance::MatrixGame(random_matrix_game(m, *dx, *dy, *seed)?),
        ProblemSpec::L1Saddle { dx, dy, radius, seed } => {
            Instance::L1Saddle(random_l1_saddle(m, *dx, *dy, *radius, *seed)?)
        }
        ProblemSpec::File { path, .. } => read_instance(path)?,
    };
    let spp = instance.spp().clone();
    if spp.m() != m {
        return Err(crate::Error::Config(format!(
            "network.m: {m} does not match the instance's {} nodes",
            spp.m()
        )));
    }
    let network = config.network.build()?;
    let seed = config.problem.seed();
    let l0 = operator_bound_l0(&instance, L0_SAMPLES, seed)?;
    let (bx, by) = instance.subgradient_bounds();
    let coefficients = penalty_coefficients(&spp, &network, &network, config.epsilon, bx, by)?;
    let problem = build_penalized_vi(
        spp.clone(),
        &network,
        &network,
        coefficients,
        OracleModel::Bounded { l0 },
        config.geometry.dgf(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let z0 = spp.sample(&mut rng);
    let omega_sq = omega_sq_bound(problem.geometry(), &z0)?;
    Ok(Setup {
        instance,
        network,
        coefficients,
        l0,
        problem,
        z0,
        omega_sq,
    })
}

/// Measured and predicted quantities of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub family: String,
    /// `deterministic`, or `stochastic` when the oracle is actually noisy.
    pub effective_mode: String,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    /// Exact primal-dual gap of the averaged problem at the node averages.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_gap: Option<f64>,
    /// Certified upper bound on `sup Q` of the penalized VI (matrix games).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalized_gap: Option<f64>,
    pub consensus_x: f64,
    pub consensus_y: f64,
    /// `4ε/R_α`; absent when there is no consensus constraint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_bound_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_bound_y: Option<f64>,
    pub communication_rounds: u64,
    pub uncached_rounds: u64,
    pub grad_g_calls: u64,
    /// Every node answers every stacked operator call once.
    pub h_calls_per_node: u64,
    pub inner_steps: u64,
    pub predicted: Predicted,
    pub constants: Constants,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicted {
    /// Bound on `sup Q` (in expectation for stochastic runs), `δ` included.
    pub gap_bound: f64,
    pub communication_rounds: u64,
    /// Closed-form upper bound on `2 Σ T_k`.
    pub h_calls_per_node: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub l: f64,
    /// Smoothness used by the schedule (`L`, or `M` when `G` is flat).
    pub l_schedule: f64,
    pub m: f64,
    pub delta: f64,
    pub sigma: f64,
    pub l0: f64,
    pub omega_sq: f64,
    pub r_alpha_sq: f64,
    pub r_beta_sq: f64,
    pub chi: f64,
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
}

/// A report together with the trace it was computed from.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub report: RunReport,
    pub trace: RunTrace,
    pub final_point: Point,
    pub setup: Setup,
}

fn consensus(setup: &Setup, z: &Point) -> Result<(f64, f64)> {
    let spp = setup.instance.spp();
    if setup.network.m() == 1 {
        return Ok((0.0, 0.0));
    }
    let (x, y) = spp.split(z.as_slice());
    let cx = consensus_violation(&setup.network, &Point::from_row_slice(x), spp.dim_x())?;
    let cy = consensus_violation(&setup.network, &Point::from_row_slice(y), spp.dim_y())?;
    Ok((cx, cy))
}

/// Runs the full pipeline for `config`: network, `L0`, penalty, schedule
/// with the smallest `N` meeting the target, solver, and report.
pub fn run_experiment(config: &RunConfig) -> Result<Experiment> {
    let start = Instant::now();
    let setup = build_setup(config)?;
    let noise = config.mode.noise_model();
    let problem = setup.problem.clone().with_noise(noise)?;
    let c = *problem.constants();
    let ls = problem.schedule_smoothness();
    let eps = config.epsilon;
    let stochastic = !noise.is_silent();

    let (schedule, gap_bound, h_pred) = if stochastic {
        let p = match config.mode {
            ModeSpec::Stochastic { p, .. } => p,
            ModeSpec::Deterministic => unreachable!("noise implies stochastic mode"),
        };
        let n = match config.n_override {
            Some(n) => n,
            None => stochastic_outer_iterations(ls, setup.omega_sq, p * eps)?,
        };
        let s = SlidingSchedule::stochastic(ls, c.m, c.sigma, setup.omega_sq, n)?;
        let nf = n as f64;
        let h = 3f64.sqrt() * c.m * nf * (nf + 1.0) / ls
            + nf * nf * (nf + 1.0) * (2.0 * nf + 1.0) * c.sigma * c.sigma / (3.0 * setup.omega_sq * ls * ls)
            + 2.0 * nf;
        (s, stochastic_gap_bound(ls, setup.omega_sq, n) + c.delta, h)
    } else {
        let n = match config.n_override {
            Some(n) => n,
            None => deterministic_outer_iterations(ls, setup.omega_sq, eps)?,
        };
        let s = SlidingSchedule::deterministic(ls, c.m, n)?;
        let nf = n as f64;
        let h = c.m * nf * (nf + 1.0) / ls + 2.0 * nf;
        (s, deterministic_gap_bound(ls, setup.omega_sq, n) + c.delta, h)
    };

    let monitor = |_k: usize, z: &Point| -> Diagnostics {
        let gap = setup.instance.averaged_gap(z).ok().flatten();
        let (cx, cy) = consensus(&setup, z).unwrap_or((f64::NAN, f64::NAN));
        Diagnostics {
            gap,
            consensus_x: Some(cx),
            consensus_y: Some(cy),
        }
    };
    let opts = RunOptions {
        monitor: Some(&monitor),
        record_timing: config.timing,
        ..Default::default()
    };
    let (z_bar, trace) = if stochastic {
        smps_run_with(&problem, &schedule, &setup.z0, config.seed, &opts)?
    } else {
        mps_run_with(&problem, &schedule, &setup.z0, &opts)?
    };

    let final_gap = setup.instance.averaged_gap(&z_bar)?;
    let penalized_gap = match &setup.instance {
        Instance::MatrixGame(g) => {
            Some(g.penalized_gap(&setup.network, &setup.network, &setup.coefficients, &z_bar, 1e-10)?)
        }
        Instance::L1Saddle(_) => None,
    };
    let (cx, cy) = consensus(&setup, &z_bar)?;
    let coeffs = &setup.coefficients;
    let bound = |r_sq: f64| (r_sq > 0.0).then(|| 4.0 * eps / r_sq.sqrt());
    let net = &setup.network;
    let report = RunReport {
        family: config.problem.family().to_string(),
        effective_mode: if stochastic { "stochastic" } else { "deterministic" }.to_string(),
        m: net.m(),
        n: schedule.n(),
        epsilon: eps,
        final_gap,
        penalized_gap,
        consensus_x: cx,
        consensus_y: cy,
        consensus_bound_x: bound(coeffs.r_alpha_sq),
        consensus_bound_y: bound(coeffs.r_beta_sq),
        communication_rounds: trace.communication_rounds,
        uncached_rounds: trace.uncached_rounds,
        grad_g_calls: trace.grad_g_calls,
        h_calls_per_node: trace.h_calls,
        inner_steps: trace.inner_steps,
        predicted: Predicted {
            gap_bound,
            communication_rounds: if net.m() > 1 { schedule.n() as u64 } else { 0 },
            h_calls_per_node: h_pred,
        },
        constants: Constants {
            l: c.l,
            l_schedule: ls,
            m: c.m,
            delta: c.delta,
            sigma: c.sigma,
            l0: setup.l0,
            omega_sq: setup.omega_sq,
            r_alpha_sq: coeffs.r_alpha_sq,
            r_beta_sq: coeffs.r_beta_sq,
            chi: net.chi(),
            lambda_max: net.lambda_max(),
            lambda_min_plus: net.lambda_min_plus(),
        },
        wall_ms: if config.timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    };
    Ok(Experiment {
        report,
        trace,
        final_point: z_bar,
        setup,
    })
}

/// Certifies the inexact-oracle condition for the config's stacked operator,
/// with the synthesized `(M, δ)` unless overridden.
pub fn certify_config(
    config: &RunConfig,
    triples: usize,
    m_override: Option<f64>,
    delta_override: Option<f64>,
) -> Result<CertificateReport> {
    let setup = build_setup(config)?;
    let spp: Arc<_> = setup.instance.spp().clone();
    let c = setup.problem.constants();
    certify_inexact_oracle(
        spp.as_ref(),
        &spp.feasible_set(),
        m_override.unwrap_or(c.m),
        delta_override.unwrap_or(c.delta),
        triples,
        config.seed,
    )
}

/// Default output directory when neither the config nor the CLI names one.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
