use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::problem::VIProblem;
use super::schedule::SlidingSchedule;
use super::trace::{IterationRecord, RunTrace, Snapshot};
use crate::error::{check_dim, Error, Result};
use crate::geometry::Point;

/// Diagnostics reported by a [`Monitor`] after an outer iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub gap: Option<f64>,
    pub consensus_x: Option<f64>,
    pub consensus_y: Option<f64>,
}

/// Observes the averaged iterate `z̄_k` after every outer iteration.
pub trait Monitor {
    fn observe(&self, k: usize, z_bar: &Point) -> Diagnostics;
}

impl<F: Fn(usize, &Point) -> Diagnostics> Monitor for F {
    fn observe(&self, k: usize, z_bar: &Point) -> Diagnostics {
        self(k, z_bar)
    }
}

#[derive(Default)]
pub struct RunOptions<'a> {
    pub monitor: Option<&'a dyn Monitor>,
    /// Keep `(z̄_k, z_k, z̲_k)` for every `k` in the trace.
    pub retain_iterates: bool,
    /// Fail with a domain error if any iterate leaves the feasible set.
    pub check_feasibility: bool,
    /// Fill `wall_ms`; left at zero otherwise so traces stay reproducible.
    pub record_timing: bool,
}

/// Deterministic mirror-prox sliding. Returns `z̄_N` and the run trace.
pub fn mps_run(problem: &VIProblem, schedule: &SlidingSchedule, z0: &Point) -> Result<(Point, RunTrace)> {
    mps_run_with(problem, schedule, z0, &RunOptions::default())
}

pub fn mps_run_with(
    problem: &VIProblem,
    schedule: &SlidingSchedule,
    z0: &Point,
    opts: &RunOptions<'_>,
) -> Result<(Point, RunTrace)> {
    if !problem.noise().is_silent() {
        return Err(Error::Config(
            "mps_run needs a deterministic operator; use smps_run for noisy problems".into(),
        ));
    }
    run(problem, schedule, z0, None, opts)
}

/// Stochastic mirror-prox sliding: every operator call draws a fresh noise
/// sample from a generator seeded with `seed`. With a silent noise model
/// this follows exactly the same trajectory as [`mps_run`].
pub fn smps_run(
    problem: &VIProblem,
    schedule: &SlidingSchedule,
    z0: &Point,
    seed: u64,
) -> Result<(Point, RunTrace)> {
    smps_run_with(problem, schedule, z0, seed, &RunOptions::default())
}

pub fn smps_run_with(
    problem: &VIProblem,
    schedule: &SlidingSchedule,
    z0: &Point,
    seed: u64,
    opts: &RunOptions<'_>,
) -> Result<(Point, RunTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run(problem, schedule, z0, Some(&mut rng), opts)
}

/// `Q(z̄, z) = G(z̄) - G(z) + <H(z), z̄ - z>`.
pub fn q_gap(problem: &VIProblem, z_bar: &Point, z: &Point) -> Result<f64> {
    check_dim(problem.dim(), z_bar.len())?;
    check_dim(problem.dim(), z.len())?;
    let g = problem.smooth();
    let h = problem.operator().apply(z);
    Ok(g.value(z_bar) - g.value(z) + h.dot(&(z_bar - z)))
}

fn run(
    problem: &VIProblem,
    schedule: &SlidingSchedule,
    z0: &Point,
    mut rng: Option<&mut ChaCha8Rng>,
    opts: &RunOptions<'_>,
) -> Result<(Point, RunTrace)> {
    let dim = problem.dim();
    check_dim(dim, z0.len())?;
    let geom = problem.geometry();
    if !geom.contains(z0) {
        return Err(Error::Domain("z0 is not in the feasible set".into()));
    }
    let c = problem.constants();
    schedule.check(c.l, c.m)?;

    let smooth = problem.smooth();
    let operator = problem.operator();
    let noise = problem.noise();
    let rounds_per_grad = smooth.rounds_per_gradient();
    let start = Instant::now();

    let mut oracle = |z: &Point| -> Point {
        let mut h = operator.apply(z);
        if let Some(rng) = rng.as_deref_mut() {
            noise.perturb(&mut h, rng);
        }
        h
    };
    let check = |p: &Point, what: &str, k: usize| -> Result<()> {
        if opts.check_feasibility && !geom.contains(p) {
            return Err(Error::Domain(format!("{what} left the feasible set at k = {k}")));
        }
        Ok(())
    };

    let mut trace = RunTrace::new();
    let mut z_bar = z0.clone();
    let mut z_prev = z0.clone();
    let mut z_t = Point::zeros(dim);
    let mut z_tilde = Point::zeros(dim);
    let mut z_next = Point::zeros(dim);
    let mut tilde_sum = Point::zeros(dim);
    let mut g = Point::zeros(dim);

    for k in 1..=schedule.n() {
        let gamma = schedule.gamma(k);
        let beta = schedule.beta(k);
        let t_k = schedule.inner_steps(k);

        let z_under = &z_bar * (1.0 - gamma) + &z_prev * gamma;
        check(&z_under, "z_under", k)?;
        // z̲_k is fixed for the whole inner loop, so ∇G(z̲_k) is evaluated once
        let grad = smooth.gradient(&z_under);
        trace.grad_g_calls += 1;
        trace.communication_rounds += rounds_per_grad;
        trace.uncached_rounds += rounds_per_grad * t_k as u64;

        z_t.copy_from(&z_prev);
        tilde_sum.fill(0.0);
        for t in 1..=t_k {
            let eta = schedule.eta(k, t);

            let h = oracle(&z_t);
            g.copy_from(&grad);
            g += h;
            geom.prox_two_anchor_into(
                g.as_slice(),
                z_prev.as_slice(),
                beta,
                z_t.as_slice(),
                eta,
                z_tilde.as_mut_slice(),
            )?;

            let h = oracle(&z_tilde);
            g.copy_from(&grad);
            g += h;
            geom.prox_two_anchor_into(
                g.as_slice(),
                z_prev.as_slice(),
                beta,
                z_t.as_slice(),
                eta,
                z_next.as_mut_slice(),
            )?;

            check(&z_tilde, "z_tilde", k)?;
            check(&z_next, "z_t", k)?;
            tilde_sum += &z_tilde;
            std::mem::swap(&mut z_t, &mut z_next);
        }
        trace.h_calls += 2 * t_k as u64;
        trace.inner_steps += t_k as u64;

        std::mem::swap(&mut z_prev, &mut z_t);
        tilde_sum /= t_k as f64;
        z_bar *= 1.0 - gamma;
        z_bar.axpy(gamma, &tilde_sum, 1.0);
        check(&z_bar, "z_bar", k)?;

        let diag = opts.monitor.map(|m| m.observe(k, &z_bar)).unwrap_or_default();
        trace.records.push(IterationRecord {
            k,
            inner_steps: t_k,
            grad_g_calls: trace.grad_g_calls,
            h_calls: trace.h_calls,
            gap_estimate: diag.gap,
            consensus_x: diag.consensus_x,
            consensus_y: diag.consensus_y,
            wall_ms: if opts.record_timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
        if opts.retain_iterates {
            trace.snapshots.push(Snapshot {
                z_bar: z_bar.clone(),
                z: z_prev.clone(),
                z_under,
            });
        }
    }
    Ok((z_bar, trace))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{FeasibleSet, GeometrySpec};
    use crate::solver::problem::{AffineOperator, OracleConstants, QuadraticTerm, ZeroTerm};
    use nalgebra::DMatrix;

    fn box_problem() -> VIProblem {
        let geom = GeometrySpec::euclidean(FeasibleSet::cube(2, 1.0).unwrap()).unwrap();
        VIProblem::new(
            geom,
            Arc::new(QuadraticTerm {
                mu: 1.0,
                center: Point::zeros(2),
            }),
            Arc::new(ZeroTerm { dim: 2 }),
            OracleConstants {
                l: 1.0,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn first_outer_iteration_ignores_the_initial_average() {
        let p = box_problem();
        let s = SlidingSchedule::deterministic(1.0, 0.0, 1).unwrap();
        let opts = RunOptions {
            retain_iterates: true,
            ..Default::default()
        };
        let z0 = Point::from_row_slice(&[1.0, 1.0]);
        let (out, trace) = mps_run_with(&p, &s, &z0, &opts).unwrap();
        // with T_1 = 1 the averaged inner point is the single z̃_1^1
        let g = z0.clone();
        let z_tilde = crate::geometry::prox_two_anchor(p.geometry(), &g, &z0, s.beta(1), &z0, s.eta(1, 1)).unwrap();
        assert_eq!(out, z_tilde);
        assert_eq!(trace.snapshots[0].z_bar, out);
    }

    #[test]
    fn oracle_counts() {
        let p = box_problem();
        let s = SlidingSchedule::deterministic(1.0, 0.7, 12).unwrap();
        let (_, trace) = mps_run(&p, &s, &Point::from_row_slice(&[1.0, -1.0])).unwrap();
        assert_eq!(trace.h_calls, 2 * s.total_inner_steps() as u64);
        assert_eq!(trace.grad_g_calls, 12);
        assert_eq!(trace.records.len(), 12);
        assert_eq!(trace.communication_rounds, 0);
    }

    #[test]
    fn infeasible_start_and_bad_schedule_are_rejected() {
        let p = box_problem();
        let s = SlidingSchedule::deterministic(1.0, 0.0, 3).unwrap();
        assert!(matches!(
            mps_run(&p, &s, &Point::from_row_slice(&[2.0, 0.0])),
            Err(Error::Domain(_))
        ));
        assert!(mps_run(&p, &s, &Point::zeros(3)).is_err());
        let weak = SlidingSchedule::deterministic(0.1, 0.0, 3).unwrap();
        assert!(matches!(mps_run(&p, &weak, &Point::zeros(2)), Err(Error::Config(_))));
    }

    #[test]
    fn q_gap_cases() {
        let geom = GeometrySpec::euclidean(FeasibleSet::cube(2, 1.0).unwrap()).unwrap();
        let c = Point::from_row_slice(&[0.3, -2.0]);
        let p = VIProblem::new(
            geom,
            Arc::new(ZeroTerm { dim: 2 }),
            Arc::new(AffineOperator {
                matrix: DMatrix::zeros(2, 2),
                offset: c.clone(),
            }),
            OracleConstants::default(),
        )
        .unwrap();
        let a = Point::from_row_slice(&[0.5, 0.5]);
        let b = Point::from_row_slice(&[-1.0, 0.25]);
        assert_eq!(q_gap(&p, &a, &a).unwrap(), 0.0);
        assert!((q_gap(&p, &a, &b).unwrap() - c.dot(&(&a - &b))).abs() < 1e-15);
    }
}
