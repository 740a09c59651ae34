use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{GeometrySpec, Point};

/// The convex, `L`-smooth part `G` of the variational inequality.
pub trait SmoothTerm: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &Point) -> f64;
    fn gradient(&self, z: &Point) -> Point;
    /// Lipschitz constant of the gradient in the l2 norm.
    fn lipschitz(&self) -> f64;
    /// Communication rounds consumed by one gradient evaluation.
    fn rounds_per_gradient(&self) -> u64 {
        0
    }
}

/// The monotone operator `H`, possibly non-smooth.
pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, z: &Point) -> Point;
}

#[derive(Clone, Debug)]
pub struct ZeroTerm {
    pub dim: usize,
}

impl SmoothTerm for ZeroTerm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _z: &Point) -> f64 {
        0.0
    }
    fn gradient(&self, _z: &Point) -> Point {
        Point::zeros(self.dim)
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

impl Operator for ZeroTerm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, _z: &Point) -> Point {
        Point::zeros(self.dim)
    }
}

/// `G(z) = (mu / 2) |z - center|^2`.
#[derive(Clone, Debug)]
pub struct QuadraticTerm {
    pub mu: f64,
    pub center: Point,
}

impl SmoothTerm for QuadraticTerm {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, z: &Point) -> f64 {
        0.5 * self.mu * (z - &self.center).norm_squared()
    }
    fn gradient(&self, z: &Point) -> Point {
        (z - &self.center) * self.mu
    }
    fn lipschitz(&self) -> f64 {
        self.mu
    }
}

/// `H(z) = A z + b`.
#[derive(Clone, Debug)]
pub struct AffineOperator {
    pub matrix: DMatrix<f64>,
    pub offset: Point,
}

impl Operator for AffineOperator {
    fn dim(&self) -> usize {
        self.offset.len()
    }
    fn apply(&self, z: &Point) -> Point {
        &self.matrix * z + &self.offset
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&Point) -> Point + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Operator for FnOperator<F>
where
    F: Fn(&Point) -> Point + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, z: &Point) -> Point {
        (self.f)(z)
    }
}

/// Constants of the inexact oracle model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    /// Lipschitz constant of `∇G`.
    pub l: f64,
    pub m: f64,
    pub delta: f64,
    pub sigma: f64,
    /// Uniform bound on `|H(z)|` over the feasible set, when known.
    pub l0: Option<f64>,
}

impl OracleConstants {
    /// `(M, delta)` for an operator bounded by `l0`, tuned to target accuracy
    /// `epsilon`: `M = l0^2 / (2 epsilon)`.
    ///
    /// Since `|H(z1) - H(z2)| <= 2 l0`, Young's inequality gives
    /// `<H(z1) - H(z2), z1 - z3> <= M/2 |z1 - z3|^2 + 2 l0^2 / M`, so
    /// `delta = 2 l0^2 / M = 4 epsilon`.
    pub fn from_operator_bound(l: f64, l0: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(l0 >= 0.0) {
            return Err(Error::Parameter(format!("l0 must be >= 0, got {l0}")));
        }
        let m = l0 * l0 / (2.0 * epsilon);
        let delta = if m > 0.0 { 2.0 * l0 * l0 / m } else { 0.0 };
        Ok(Self {
            l,
            m,
            delta,
            sigma: 0.0,
            l0: Some(l0),
        })
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("L", self.l), ("M", self.m), ("delta", self.delta), ("sigma", self.sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(l0) = self.l0 {
            if !(l0 >= 0.0 && l0.is_finite()) {
                return Err(Error::Parameter(format!("L0 must be finite and >= 0, got {l0}")));
            }
        }
        Ok(())
    }
}

/// Additive noise on operator evaluations. `sigma` bounds the expected
/// squared norm of the noise vector (not a per-coordinate deviation).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// Uniform on `[-a, a]^d` with `a = sigma sqrt(3 / d)`.
    Uniform { sigma: f64 },
    /// Per-coordinate Gaussian with deviation `sigma / sqrt(d)`, rejected
    /// outside four deviations.
    TruncatedGaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::Uniform { sigma } | NoiseModel::TruncatedGaussian { sigma } => *sigma,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.sigma() == 0.0
    }

    /// Adds one fresh noise sample to `h`.
    pub fn perturb<R: Rng + ?Sized>(&self, h: &mut Point, rng: &mut R) {
        let d = h.len() as f64;
        match *self {
            NoiseModel::None => {}
            NoiseModel::Uniform { sigma } => {
                let a = sigma * (3.0 / d).sqrt();
                for v in h.iter_mut() {
                    *v += a * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            NoiseModel::TruncatedGaussian { sigma } => {
                let s = sigma / d.sqrt();
                for v in h.iter_mut() {
                    let xi = loop {
                        let x: f64 = StandardNormal.sample(rng);
                        if x.abs() <= 4.0 {
                            break x;
                        }
                    };
                    *v += s * xi;
                }
            }
        }
    }
}

/// A variational inequality `<H(z) + ∇G(z), z* - z> <= 0` over a feasible set.
#[derive(Clone)]
pub struct VIProblem {
    geometry: GeometrySpec,
    smooth: Arc<dyn SmoothTerm>,
    operator: Arc<dyn Operator>,
    constants: OracleConstants,
    noise: NoiseModel,
}

impl fmt::Debug for VIProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VIProblem")
            .field("geometry", &self.geometry)
            .field("constants", &self.constants)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

impl VIProblem {
    pub fn new(
        geometry: GeometrySpec,
        smooth: Arc<dyn SmoothTerm>,
        operator: Arc<dyn Operator>,
        constants: OracleConstants,
    ) -> Result<Self> {
        check_dim(geometry.dim(), smooth.dim())?;
        check_dim(geometry.dim(), operator.dim())?;
        constants.validate()?;
        if constants.sigma != 0.0 {
            return Err(Error::Parameter(
                "sigma is set through with_noise, not directly".into(),
            ));
        }
        Ok(Self {
            geometry,
            smooth,
            operator,
            constants,
            noise: NoiseModel::None,
        })
    }

    /// Attaches a stochastic oracle; `sigma` follows the noise model.
    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        let sigma = noise.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
        }
        self.noise = if sigma == 0.0 { NoiseModel::None } else { noise };
        self.constants.sigma = sigma;
        Ok(self)
    }

    pub fn geometry(&self) -> &GeometrySpec {
        &self.geometry
    }

    pub fn constants(&self) -> &OracleConstants {
        &self.constants
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn smooth(&self) -> &dyn SmoothTerm {
        self.smooth.as_ref()
    }

    pub fn operator(&self) -> &dyn Operator {
        self.operator.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    /// The smoothness constant handed to the schedules. Any upper bound on
    /// the Lipschitz constant of `∇G` is valid; when `G` is flat (`L = 0`)
    /// the schedules still need a positive value, and `M` is used so that
    /// `T_k = k`.
    pub fn schedule_smoothness(&self) -> f64 {
        let c = &self.constants;
        if c.l > 0.0 {
            c.l
        } else if c.m > 0.0 {
            c.m
        } else {
            1.0
        }
    }
}
