use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{FeasibleSet, Point};
use crate::solver::Operator;

/// Slack allowed on top of `delta` for rounding.
pub const CERT_TOL: f64 = 1e-9;

/// Outcome of a passing certification run.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub triples: usize,
    /// Largest `lhs - rhs` seen; negative means every triple had room to spare.
    pub worst_slack: f64,
    pub worst_triple: [Point; 3],
}

/// A point on the relative boundary of `set`: a box corner, a simplex
/// vertex, a sphere point. Extreme points are where bounded operators
/// attain their largest norms.
pub fn sample_extreme<R: Rng + ?Sized>(set: &FeasibleSet, rng: &mut R) -> Point {
    let mut out = Point::zeros(set.dim());
    for (off, leaf) in set.leaves() {
        match leaf {
            FeasibleSet::Box { lower, upper } => {
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    out[off + i] = if rng.random::<bool>() { *l } else { *u };
                }
            }
            FeasibleSet::Simplex { dim } => out[off + rng.random_range(0..*dim)] = 1.0,
            FeasibleSet::Ball { center, radius } => {
                let p = leaf.sample(rng);
                let dir = Point::from_iterator(center.len(), p.iter().zip(center).map(|(a, c)| a - c));
                let n = dir.norm();
                for (i, c) in center.iter().enumerate() {
                    out[off + i] = if n > 0.0 { c + radius * dir[i] / n } else { *c };
                }
            }
            FeasibleSet::Product { .. } => unreachable!("leaves are never products"),
        }
    }
    out
}

fn sample_mixed<R: Rng + ?Sized>(set: &FeasibleSet, rng: &mut R) -> Point {
    if rng.random::<f64>() < 0.25 {
        sample_extreme(set, rng)
    } else {
        set.sample(rng)
    }
}

/// Checks `<H(z1) - H(z2), z1 - z3> <= M/2 |z1 - z2|² + M/2 |z1 - z3|² + δ`
/// on `triples` feasible triples.
///
/// Half the triples are independent random draws; the other half put `z2`
/// close to `z1` and `z3` far from it, which is where a discontinuous
/// operator comes nearest to violating the condition.
pub fn certify_inexact_oracle(
    op: &dyn Operator,
    set: &FeasibleSet,
    m: f64,
    delta: f64,
    triples: usize,
    seed: u64,
) -> Result<CertificateReport> {
    check_dim(set.dim(), op.dim())?;
    if !(m >= 0.0 && delta >= 0.0) {
        return Err(Error::Parameter(format!("M = {m} and delta = {delta} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = set.dim();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_triple = [Point::zeros(dim), Point::zeros(dim), Point::zeros(dim)];
    for n in 0..triples {
        let z1 = sample_mixed(set, &mut rng);
        let (z2, z3) = if n % 2 == 0 {
            (sample_mixed(set, &mut rng), sample_mixed(set, &mut rng))
        } else {
            let scale = 10f64.powf(-rng.random_range(1.0..8.0));
            let jitter = Point::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)) * scale;
            let z2 = set.project(&(&z1 + jitter))?;
            let h_gap = op.apply(&z1) - op.apply(&z2);
            // step against the operator difference, as far as the set allows
            let far = if h_gap.norm() > 0.0 {
                let t = rng.random_range(0.1..10.0);
                set.project(&(&z1 - h_gap * t))?
            } else {
                sample_extreme(set, &mut rng)
            };
            (z2, far)
        };
        let lhs = (op.apply(&z1) - op.apply(&z2)).dot(&(&z1 - &z3));
        let rhs = 0.5 * m * (&z1 - &z2).norm_squared() + 0.5 * m * (&z1 - &z3).norm_squared() + delta;
        let slack = lhs - rhs;
        if slack > worst {
            worst = slack;
            worst_triple = [z1.clone(), z2.clone(), z3.clone()];
        }
        if slack > CERT_TOL {
            return Err(Error::Certification(format!(
                "triple {n} violates the condition by {slack:e} (M = {m}, delta = {delta}): \
                 z1 = {:?}, z2 = {:?}, z3 = {:?}",
                z1.as_slice(),
                z2.as_slice(),
                z3.as_slice()
            )));
        }
    }
    Ok(CertificateReport {
        triples,
        worst_slack: worst,
        worst_triple,
    })
}

/// `1.1 × max |H(z)|` over sampled feasible points, a quarter of them
/// extreme points of the set.
pub fn sampled_operator_bound(op: &dyn Operator, set: &FeasibleSet, samples: usize, seed: u64) -> Result<f64> {
    check_dim(set.dim(), op.dim())?;
    if samples == 0 {
        return Err(Error::Parameter("samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let best = (0..samples)
        .map(|_| op.apply(&sample_mixed(set, &mut rng)).norm())
        .fold(0.0, f64::max);
    Ok(1.1 * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{AffineOperator, FnOperator, ZeroTerm};
    use nalgebra::DMatrix;

    #[test]
    fn zero_operator_certifies_with_nothing() {
        let set = FeasibleSet::cube(3, 1.0).unwrap();
        let rep = certify_inexact_oracle(&ZeroTerm { dim: 3 }, &set, 0.0, 0.0, 500, 1).unwrap();
        assert!(rep.worst_slack <= 0.0);
        assert_eq!(sampled_operator_bound(&ZeroTerm { dim: 3 }, &set, 10, 1).unwrap(), 0.0);
    }

    #[test]
    fn lipschitz_operator_certifies_with_its_constant() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let op = AffineOperator {
            matrix: a,
            offset: Point::zeros(2),
        };
        let set = FeasibleSet::cube(2, 1.0).unwrap();
        assert!(certify_inexact_oracle(&op, &set, 2.0, 0.0, 2000, 3).is_ok());
    }

    #[test]
    fn jump_operator_needs_delta() {
        // H(z) = sign(z) per coordinate on [-1, 1]: jumps of size 2 at 0
        let op = FnOperator::new(1, |z: &Point| z.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }));
        let set = FeasibleSet::cube(1, 1.0).unwrap();
        let r = certify_inexact_oracle(&op, &set, 0.1, 0.0, 4000, 5);
        assert!(matches!(r, Err(Error::Certification(_))));
        // |H1 - H2| <= 2 gives delta = 2 * 1 / M
        assert!(certify_inexact_oracle(&op, &set, 0.1, 20.0, 4000, 5).is_ok());
    }
}
