//! Stacked saddle problems over a network and their penalty reformulation.
//!
//! Node `i` holds a convex-concave `f_i(x_i, y_i)`. Stacked points are laid
//! out as `z = [x_1, ..., x_m, y_1, ..., y_m]`, and the consensus
//! constraints `W x = 0`, `W y = 0` are replaced by the quadratic penalty
//! `G(z) = (R_α²/ε) xᵀ(W̃ ⊗ I)x + (R_β²/ε) yᵀ(W̃ ⊗ I)y`. As a VI term the
//! y-penalty enters with positive sign, so `G` is convex in the whole of `z`.

use std::sync::Arc;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Dgf, FeasibleSet, GeometrySpec, Point};
use crate::network::NetworkModel;
use crate::solver::{Operator, OracleConstants, SmoothTerm, VIProblem};

/// One node's convex-concave function with its (sub/super)gradient oracles.
pub trait LocalSaddle: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    /// A subgradient in `x`.
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Point;
    /// A supergradient in `y`.
    fn grad_y(&self, x: &[f64], y: &[f64]) -> Point;
}

/// `m` local saddle functions sharing local sets `X` and `Y`.
#[derive(Clone)]
pub struct StackedSpp {
    locals: Vec<Arc<dyn LocalSaddle>>,
    dx: usize,
    dy: usize,
    x_set: FeasibleSet,
    y_set: FeasibleSet,
}

impl std::fmt::Debug for StackedSpp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StackedSpp")
            .field("m", &self.locals.len())
            .field("dx", &self.dx)
            .field("dy", &self.dy)
            .field("x_set", &self.x_set)
            .field("y_set", &self.y_set)
            .finish()
    }
}

impl StackedSpp {
    pub fn new(locals: Vec<Arc<dyn LocalSaddle>>, x_set: FeasibleSet, y_set: FeasibleSet) -> Result<Self> {
        let first = locals
            .first()
            .ok_or_else(|| Error::Parameter("a stacked problem needs at least one node".into()))?;
        let (dx, dy) = (first.dim_x(), first.dim_y());
        for l in &locals {
            check_dim(dx, l.dim_x())?;
            check_dim(dy, l.dim_y())?;
        }
        x_set.validate()?;
        y_set.validate()?;
        check_dim(dx, x_set.dim())?;
        check_dim(dy, y_set.dim())?;
        Ok(Self {
            locals,
            dx,
            dy,
            x_set,
            y_set,
        })
    }

    pub fn m(&self) -> usize {
        self.locals.len()
    }

    pub fn dim_x(&self) -> usize {
        self.dx
    }

    pub fn dim_y(&self) -> usize {
        self.dy
    }

    pub fn dim(&self) -> usize {
        self.m() * (self.dx + self.dy)
    }

    pub fn locals(&self) -> &[Arc<dyn LocalSaddle>] {
        &self.locals
    }

    pub fn x_set(&self) -> &FeasibleSet {
        &self.x_set
    }

    pub fn y_set(&self) -> &FeasibleSet {
        &self.y_set
    }

    /// `X^m × Y^m` in stacked order.
    pub fn feasible_set(&self) -> FeasibleSet {
        let m = self.m();
        let parts = std::iter::repeat_n(self.x_set.clone(), m)
            .chain(std::iter::repeat_n(self.y_set.clone(), m))
            .collect();
        FeasibleSet::Product { parts }
    }

    /// The stacked `x` and `y` halves of `z`.
    pub fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.m() * self.dx)
    }

    pub fn x_block<'a>(&self, z: &'a [f64], i: usize) -> &'a [f64] {
        &z[i * self.dx..(i + 1) * self.dx]
    }

    pub fn y_block<'a>(&self, z: &'a [f64], i: usize) -> &'a [f64] {
        let off = self.m() * self.dx;
        &z[off + i * self.dy..off + (i + 1) * self.dy]
    }

    /// Repeats `(x, y)` on every node.
    pub fn consensus_point(&self, x: &[f64], y: &[f64]) -> Result<Point> {
        check_dim(self.dx, x.len())?;
        check_dim(self.dy, y.len())?;
        let m = self.m();
        let mut z = Vec::with_capacity(self.dim());
        for _ in 0..m {
            z.extend_from_slice(x);
        }
        for _ in 0..m {
            z.extend_from_slice(y);
        }
        Ok(Point::from_vec(z))
    }

    /// Node-averaged `(x̄, ȳ)` of a stacked point.
    pub fn block_average(&self, z: &Point) -> Result<(Point, Point)> {
        check_dim(self.dim(), z.len())?;
        let m = self.m();
        let mut x = Point::zeros(self.dx);
        let mut y = Point::zeros(self.dy);
        for i in 0..m {
            x += Point::from_row_slice(self.x_block(z.as_slice(), i));
            y += Point::from_row_slice(self.y_block(z.as_slice(), i));
        }
        Ok((x / m as f64, y / m as f64))
    }

    /// `F(z) = Σ_i f_i(x_i, y_i)`.
    pub fn value(&self, z: &Point) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        let zs = z.as_slice();
        Ok(self
            .locals
            .iter()
            .enumerate()
            .map(|(i, f)| f.value(self.x_block(zs, i), self.y_block(zs, i)))
            .sum())
    }

    /// Random feasible stacked point (each block drawn independently).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.feasible_set().sample(rng)
    }
}

/// `H(z) = (∇_x F; -∇_y F)`, evaluated blockwise.
impl Operator for StackedSpp {
    fn dim(&self) -> usize {
        StackedSpp::dim(self)
    }

    fn apply(&self, z: &Point) -> Point {
        let zs = z.as_slice();
        let (m, dx, dy) = (self.m(), self.dx, self.dy);
        let mut h = Point::zeros(self.dim());
        for (i, f) in self.locals.iter().enumerate() {
            let (xi, yi) = (self.x_block(zs, i), self.y_block(zs, i));
            h.rows_mut(i * dx, dx).copy_from(&f.grad_x(xi, yi));
            h.rows_mut(m * dx + i * dy, dy).copy_from(&(-f.grad_y(xi, yi)));
        }
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyCoefficients {
    pub r_alpha_sq: f64,
    pub r_beta_sq: f64,
    pub epsilon: f64,
}

impl PenaltyCoefficients {
    /// No penalty at all (single node).
    pub fn none(epsilon: f64) -> Self {
        Self {
            r_alpha_sq: 0.0,
            r_beta_sq: 0.0,
            epsilon,
        }
    }

    pub fn r_alpha(&self) -> f64 {
        self.r_alpha_sq.sqrt()
    }

    pub fn r_beta(&self) -> f64 {
        self.r_beta_sq.sqrt()
    }
}

/// `R² = bound² / λ_min⁺(W̃)` for each of the two networks. A single-node
/// network has no consensus constraint and gets `R² = 0`.
pub fn penalty_coefficients(
    spp: &StackedSpp,
    net_x: &NetworkModel,
    net_y: &NetworkModel,
    epsilon: f64,
    subgrad_bound_x: f64,
    subgrad_bound_y: f64,
) -> Result<PenaltyCoefficients> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    for (name, b) in [("subgrad_bound_x", subgrad_bound_x), ("subgrad_bound_y", subgrad_bound_y)] {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {b}")));
        }
    }
    for net in [net_x, net_y] {
        if net.m() != spp.m() {
            return Err(Error::Config(format!(
                "network has {} nodes but the problem has {}",
                net.m(),
                spp.m()
            )));
        }
    }
    let r_sq = |net: &NetworkModel, bound: f64| -> Result<f64> {
        if net.m() == 1 {
            return Ok(0.0);
        }
        let lam = net.lambda_min_plus();
        if !(lam > 0.0) {
            return Err(Error::DegenerateNetwork(format!("lambda_min_plus = {lam}")));
        }
        Ok(bound * bound / lam)
    };
    Ok(PenaltyCoefficients {
        r_alpha_sq: r_sq(net_x, subgrad_bound_x)?,
        r_beta_sq: r_sq(net_y, subgrad_bound_y)?,
        epsilon,
    })
}

/// The consensus penalty `G`. One gradient costs one communication round
/// (the x- and y-blocks travel together).
#[derive(Clone, Debug)]
pub struct PenaltyTerm {
    net_x: NetworkModel,
    net_y: NetworkModel,
    coeffs: PenaltyCoefficients,
    m: usize,
    dx: usize,
    dy: usize,
}

impl PenaltyTerm {
    pub fn new(net_x: NetworkModel, net_y: NetworkModel, coeffs: PenaltyCoefficients, dx: usize, dy: usize) -> Result<Self> {
        if net_x.m() != net_y.m() {
            return Err(Error::Config("x and y networks differ in node count".into()));
        }
        let m = net_x.m();
        Ok(Self {
            net_x,
            net_y,
            coeffs,
            m,
            dx,
            dy,
        })
    }

    fn weights(&self) -> (f64, f64) {
        let c = &self.coeffs;
        (c.r_alpha_sq / c.epsilon, c.r_beta_sq / c.epsilon)
    }

    pub fn coefficients(&self) -> &PenaltyCoefficients {
        &self.coeffs
    }
}

impl SmoothTerm for PenaltyTerm {
    fn dim(&self) -> usize {
        self.m * (self.dx + self.dy)
    }

    fn value(&self, z: &Point) -> f64 {
        let (wa, wb) = self.weights();
        let (x, y) = z.as_slice().split_at(self.m * self.dx);
        let qx = self.net_x.quadratic_form(x, self.dx).expect("dimension checked at construction");
        let qy = self.net_y.quadratic_form(y, self.dy).expect("dimension checked at construction");
        wa * qx + wb * qy
    }

    fn gradient(&self, z: &Point) -> Point {
        let (wa, wb) = self.weights();
        let (x, y) = z.as_slice().split_at(self.m * self.dx);
        let gx = self.net_x.gossip(x, self.dx).expect("dimension checked at construction");
        let gy = self.net_y.gossip(y, self.dy).expect("dimension checked at construction");
        Point::from_iterator(
            self.dim(),
            gx.iter().map(|v| 2.0 * wa * v).chain(gy.iter().map(|v| 2.0 * wb * v)),
        )
    }

    fn lipschitz(&self) -> f64 {
        let (wa, wb) = self.weights();
        (2.0 * wa * self.net_x.lambda_max()).max(2.0 * wb * self.net_y.lambda_max())
    }

    fn rounds_per_gradient(&self) -> u64 {
        u64::from(self.m > 1)
    }
}

/// How the inexact-oracle constants `(M, δ)` of the stacked operator are set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleModel {
    /// `|H| <= l0` on the feasible set: `M = l0²/(2ε)`, `δ = 2 l0²/M`.
    Bounded { l0: f64 },
    /// `H` is `m`-Lipschitz: `M = m`, `δ = 0`.
    Lipschitz { m: f64 },
    Explicit { m: f64, delta: f64 },
}

/// The penalized VI: `H` is the stacked operator of `spp`, `G` the penalty.
pub fn build_penalized_vi(
    spp: Arc<StackedSpp>,
    net_x: &NetworkModel,
    net_y: &NetworkModel,
    coeffs: PenaltyCoefficients,
    oracle: OracleModel,
    dgf: Dgf,
) -> Result<VIProblem> {
    for (name, net) in [("x", net_x), ("y", net_y)] {
        if net.m() != spp.m() {
            return Err(Error::Config(format!(
                "network.m: {name}-network has {} nodes but the problem has {}",
                net.m(),
                spp.m()
            )));
        }
    }
    let penalty = PenaltyTerm::new(net_x.clone(), net_y.clone(), coeffs, spp.dim_x(), spp.dim_y())?;
    let l = penalty.lipschitz();
    let constants = match oracle {
        OracleModel::Bounded { l0 } => OracleConstants::from_operator_bound(l, l0, coeffs.epsilon)?,
        OracleModel::Lipschitz { m } => OracleConstants {
            l,
            m,
            ..Default::default()
        },
        OracleModel::Explicit { m, delta } => OracleConstants {
            l,
            m,
            delta,
            ..Default::default()
        },
    };
    let geometry = GeometrySpec::new(dgf, spp.feasible_set())?;
    VIProblem::new(geometry, Arc::new(penalty), spp, constants)
}
