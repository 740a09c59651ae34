//! Convex quadratic programs with consensus constraints, used to check the
//! penalty reformulation against problems whose solutions are known.
//!
//! Node `i` holds `u_i(x) = ½ xᵀPᵢx + qᵢᵀx` on the box `[-r, r]^d`. The
//! constrained problem is `min Σ u_i(x_i)` subject to `x_1 = ... = x_m`,
//! and the penalized one is `U(x) = u(x) + (R²/ε) xᵀ(W̃ ⊗ I)x`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::Point;
use crate::network::NetworkModel;

#[derive(Clone, Debug)]
pub struct ConsensusQp {
    p: Vec<DMatrix<f64>>,
    q: Vec<DVector<f64>>,
    d: usize,
    radius: f64,
}

impl ConsensusQp {
    pub fn new(p: Vec<DMatrix<f64>>, q: Vec<DVector<f64>>, radius: f64) -> Result<Self> {
        let d = q.first().map(|v| v.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::Parameter("need at least one node of positive dimension".into()));
        }
        check_dim(p.len(), q.len())?;
        for (pi, qi) in p.iter().zip(&q) {
            check_dim(d, qi.len())?;
            check_dim(d, pi.nrows())?;
            check_dim(d, pi.ncols())?;
        }
        Ok(Self { p, q, d, radius })
    }

    /// `Pᵢ = BᵢBᵢᵀ + I` with `Bᵢ`, `qᵢ` entries uniform on `[-1, 1]`, box
    /// radius 10. `Σ Pᵢ ⪰ m I` keeps the solution well inside the box.
    pub fn random(m: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Vec::with_capacity(m);
        let mut q = Vec::with_capacity(m);
        for _ in 0..m {
            let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..=1.0));
            p.push(&b * b.transpose() + DMatrix::identity(d, d));
            q.push(DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0)));
        }
        Self::new(p, q, 10.0)
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `u(x) = Σ u_i(x_i)` on a stacked point.
    pub fn objective(&self, x: &Point) -> f64 {
        let d = self.d;
        self.p
            .iter()
            .zip(&self.q)
            .enumerate()
            .map(|(i, (pi, qi))| {
                let xi = x.rows(i * d, d);
                0.5 * xi.dot(&(pi * xi)) + qi.dot(&xi)
            })
            .sum()
    }

    pub fn gradient(&self, x: &Point) -> Point {
        let d = self.d;
        let mut g = Point::zeros(x.len());
        for (i, (pi, qi)) in self.p.iter().zip(&self.q).enumerate() {
            let gi = pi * x.rows(i * d, d) + qi;
            g.rows_mut(i * d, d).copy_from(&gi);
        }
        g
    }

    /// Block-diagonal Hessian of `u`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let (m, d) = (self.m(), self.d);
        let mut h = DMatrix::zeros(m * d, m * d);
        for (i, pi) in self.p.iter().enumerate() {
            h.view_mut((i * d, i * d), (d, d)).copy_from(pi);
        }
        h
    }

    /// The consensus solution `x̂ = -(Σ Pᵢ)⁻¹ Σ qᵢ`, repeated on every node.
    pub fn constrained_solution(&self) -> Result<Point> {
        let d = self.d;
        let p_sum = self.p.iter().fold(DMatrix::zeros(d, d), |acc, p| acc + p);
        let q_sum = self.q.iter().fold(DVector::zeros(d), |acc, q| acc + q);
        let x = p_sum
            .cholesky()
            .ok_or_else(|| Error::Domain("Σ Pᵢ is not positive definite".into()))?
            .solve(&(-q_sum));
        if x.amax() >= self.radius {
            return Err(Error::Domain("constrained solution touches the box boundary".into()));
        }
        Ok(Point::from_iterator(self.m() * d, (0..self.m()).flat_map(|_| x.iter().copied())))
    }

    /// `R² = |∇u(x*)|² / λ_min⁺(W̃)`, the squared norm bound on the
    /// minimal-norm dual solution of `W x = 0`.
    pub fn dual_radius_sq(&self, net: &NetworkModel) -> Result<f64> {
        check_dim(self.m(), net.m())?;
        let lam = net.lambda_min_plus();
        if !(lam > 0.0) {
            return Err(Error::DegenerateNetwork(format!("lambda_min_plus = {lam}")));
        }
        Ok(self.gradient(&self.constrained_solution()?).norm_squared() / lam)
    }

    pub fn penalized<'a>(&'a self, net: &'a NetworkModel, r_sq: f64, epsilon: f64) -> Result<PenalizedQp<'a>> {
        check_dim(self.m(), net.m())?;
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(PenalizedQp {
            qp: self,
            net,
            weight: r_sq / epsilon,
        })
    }
}

/// `U(x) = u(x) + w xᵀ(W̃ ⊗ I)x` with `w = R²/ε`.
#[derive(Clone, Copy, Debug)]
pub struct PenalizedQp<'a> {
    qp: &'a ConsensusQp,
    net: &'a NetworkModel,
    weight: f64,
}

impl PenalizedQp<'_> {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn value(&self, x: &Point) -> f64 {
        let pen = self.net.quadratic_form(x.as_slice(), self.qp.d).expect("stacked dimension");
        self.qp.objective(x) + self.weight * pen
    }

    pub fn gradient(&self, x: &Point) -> Point {
        let pen = self.net.gossip(x.as_slice(), self.qp.d).expect("stacked dimension");
        self.qp.gradient(x) + pen * (2.0 * self.weight)
    }

    /// Upper bound on the Lipschitz constant of `∇U`.
    pub fn smoothness(&self) -> f64 {
        let p_max = self.qp.p.iter().map(|p| p.symmetric_eigenvalues().max()).fold(0.0, f64::max);
        p_max + 2.0 * self.weight * self.net.lambda_max()
    }

    /// Minimizes `U` over the box by accelerated projected gradient with
    /// adaptive restart, stopping once the gradient mapping at the iterate
    /// has norm below `tol`.
    pub fn minimize(&self, tol: f64, max_iters: usize) -> Point {
        let n = self.qp.m() * self.qp.d;
        let r = self.qp.radius;
        let step = 1.0 / self.smoothness();
        let proj = |v: Point| v.map(|c| c.clamp(-r, r));
        let mut x = Point::zeros(n);
        let mut y = x.clone();
        let mut theta: f64 = 1.0;
        for _ in 0..max_iters {
            let x_next = proj(&y - self.gradient(&y) * step);
            if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
                // momentum points uphill: restart from the current iterate
                theta = 1.0;
                y = x.clone();
                continue;
            }
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            y = &x_next + (&x_next - &x) * ((theta - 1.0) / theta_next);
            theta = theta_next;
            x = x_next;
            let mapping = (&x - proj(&x - self.gradient(&x) * step)).norm() / step;
            if mapping < tol {
                break;
            }
        }
        x
    }

    /// A point `x̃ = x0 + t v` with `U(x̃) - U(x0) = excess`, `t >= 0`.
    pub fn excess_point(&self, x0: &Point, direction: &Point, excess: f64) -> Result<Point> {
        check_dim(x0.len(), direction.len())?;
        // U(x0 + t v) - U(x0) = a t² / 2 + b t, exact for a quadratic
        let b = self.gradient(x0).dot(direction);
        let hv = self.qp.hessian() * direction
            + self.net.gossip(direction.as_slice(), self.qp.d)? * (2.0 * self.weight);
        let a = direction.dot(&hv);
        if !(a > 0.0) {
            return Err(Error::Domain("direction has no curvature".into()));
        }
        let t = (-b + (b * b + 2.0 * a * excess).sqrt()) / a;
        Ok(x0 + direction * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, Topology};

    #[test]
    fn penalized_minimizer_solves_the_normal_equations() {
        let qp = ConsensusQp::random(3, 2, 7).unwrap();
        let net = build_topology(&Topology::Path, 3).unwrap();
        let pen = qp.penalized(&net, 1.0, 0.1).unwrap();
        let x = pen.minimize(1e-12, 200_000);
        // (P + 2w W̃⊗I) x = -q, dense
        let mut k = qp.hessian();
        let w_big = net.gossip_matrix().kronecker(&DMatrix::identity(2, 2));
        k += w_big * (2.0 * pen.weight());
        let q = Point::from_iterator(6, qp.q.iter().flat_map(|v| v.iter().copied()));
        let exact = k.cholesky().unwrap().solve(&(-q));
        let err = (x - exact).amax();
        assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn excess_point_hits_the_target() {
        let qp = ConsensusQp::random(2, 2, 1).unwrap();
        let net = build_topology(&Topology::Path, 2).unwrap();
        let pen = qp.penalized(&net, 2.0, 0.5).unwrap();
        let x0 = pen.minimize(1e-12, 200_000);
        let v = Point::from_row_slice(&[1.0, 0.0, -1.0, 0.0]);
        let xt = pen.excess_point(&x0, &v, 0.5).unwrap();
        assert!((pen.value(&xt) - pen.value(&x0) - 0.5).abs() < 1e-10);
    }
}
