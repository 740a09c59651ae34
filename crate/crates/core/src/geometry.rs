//! Feasible sets, Bregman setups and the two-anchor proximal step.
//!
//! Two distance-generating functions are supported: the squared Euclidean
//! norm, which works on any of the shipped sets, and the negative entropy,
//! which is restricted to simplices (or products of simplices). For
//! `ω` the distance-generating function the divergence is
//!
//! ```text
//! V(a, b) = ω(b) - ω(a) - <∇ω(a), b - a>
//! ```
//!
//! so the first argument is the anchor. Under entropy this is
//! `Σ b_j ln(b_j / a_j)`, i.e. `KL(b ‖ a)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Point = DVector<f64>;

/// Absolute tolerance for set membership.
pub const FEAS_TOL: f64 = 1e-9;

/// Lower clip applied to entropy-geometry iterates before renormalising.
pub const ENTROPY_FLOOR: f64 = 1e-30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex { dim: usize },
    Product { parts: Vec<FeasibleSet> },
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = FeasibleSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    /// The cube `[-radius, radius]^dim`.
    pub fn cube(dim: usize, radius: f64) -> Result<Self> {
        Self::boxed(vec![-radius; dim], vec![radius; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = FeasibleSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        let set = FeasibleSet::Simplex { dim };
        set.validate()?;
        Ok(set)
    }

    pub fn product(parts: Vec<FeasibleSet>) -> Result<Self> {
        let set = FeasibleSet::Product { parts };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Box { lower, upper } => {
                check_dim(lower.len(), upper.len())?;
                if lower.is_empty() {
                    return Err(Error::Parameter("box must have dimension >= 1".into()));
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !l.is_finite() || !u.is_finite() {
                        return Err(Error::Parameter(format!("box bound {i} is not finite")));
                    }
                    if l > u {
                        return Err(Error::Parameter(format!(
                            "box lower[{i}] = {l} exceeds upper[{i}] = {u}"
                        )));
                    }
                }
                Ok(())
            }
            FeasibleSet::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::Parameter("ball must have dimension >= 1".into()));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Parameter(format!("ball radius {radius} must be > 0")));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Parameter("ball center is not finite".into()));
                }
                Ok(())
            }
            FeasibleSet::Simplex { dim } => {
                if *dim == 0 {
                    return Err(Error::Parameter("simplex dimension must be >= 1".into()));
                }
                Ok(())
            }
            FeasibleSet::Product { parts } => {
                if parts.is_empty() {
                    return Err(Error::Parameter("product of zero sets".into()));
                }
                parts.iter().try_for_each(FeasibleSet::validate)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Simplex { dim } => *dim,
            FeasibleSet::Product { parts } => parts.iter().map(FeasibleSet::dim).sum(),
        }
    }

    /// Non-product sets in storage order, each with its coordinate offset.
    pub fn leaves(&self) -> Vec<(usize, &FeasibleSet)> {
        fn walk<'a>(set: &'a FeasibleSet, offset: &mut usize, out: &mut Vec<(usize, &'a FeasibleSet)>) {
            match set {
                FeasibleSet::Product { parts } => {
                    for p in parts {
                        walk(p, offset, out);
                    }
                }
                leaf => {
                    out.push((*offset, leaf));
                    *offset += leaf.dim();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut 0, &mut out);
        out
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        if p.len() != self.dim() || p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.leaves().into_iter().all(|(off, leaf)| {
            let block = &p[off..off + leaf.dim()];
            match leaf {
                FeasibleSet::Box { lower, upper } => block
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
                FeasibleSet::Ball { center, radius } => {
                    let d2: f64 = block.iter().zip(center).map(|(v, c)| (v - c).powi(2)).sum();
                    d2.sqrt() <= radius + tol
                }
                FeasibleSet::Simplex { .. } => {
                    block.iter().all(|v| *v >= -tol) && (block.iter().sum::<f64>() - 1.0).abs() <= tol
                }
                FeasibleSet::Product { .. } => unreachable!("leaves are never products"),
            }
        })
    }

    /// Euclidean projection.
    pub fn project(&self, p: &Point) -> Result<Point> {
        check_dim(self.dim(), p.len())?;
        let mut out = p.clone();
        for (off, leaf) in self.leaves() {
            let n = leaf.dim();
            project_leaf(leaf, &mut out.as_mut_slice()[off..off + n]);
        }
        Ok(out)
    }

    /// A random feasible point. Boxes and balls are sampled uniformly, simplices
    /// from the flat Dirichlet distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut out = vec![0.0; self.dim()];
        for (off, leaf) in self.leaves() {
            let block = &mut out[off..off + leaf.dim()];
            match leaf {
                FeasibleSet::Box { lower, upper } => {
                    for (v, (l, u)) in block.iter_mut().zip(lower.iter().zip(upper)) {
                        *v = l + (u - l) * rng.random::<f64>();
                    }
                }
                FeasibleSet::Ball { center, radius } => {
                    let dir: Vec<f64> = (0..center.len()).map(|_| StandardNormal.sample(rng)).collect();
                    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    let r = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
                    for ((v, d), c) in block.iter_mut().zip(&dir).zip(center) {
                        *v = c + r * d / norm;
                    }
                }
                FeasibleSet::Simplex { .. } => {
                    for v in block.iter_mut() {
                        *v = -(1.0 - rng.random::<f64>()).ln();
                    }
                    let s: f64 = block.iter().sum();
                    block.iter_mut().for_each(|v| *v /= s);
                }
                FeasibleSet::Product { .. } => unreachable!(),
            }
        }
        Point::from_vec(out)
    }

    /// The point every solver run starts from when none is given: box and
    /// ball centres, simplex barycentres.
    pub fn center(&self) -> Point {
        let mut out = vec![0.0; self.dim()];
        for (off, leaf) in self.leaves() {
            let block = &mut out[off..off + leaf.dim()];
            match leaf {
                FeasibleSet::Box { lower, upper } => {
                    for (v, (l, u)) in block.iter_mut().zip(lower.iter().zip(upper)) {
                        *v = 0.5 * (l + u);
                    }
                }
                FeasibleSet::Ball { center, .. } => block.copy_from_slice(center),
                FeasibleSet::Simplex { dim } => block.fill(1.0 / *dim as f64),
                FeasibleSet::Product { .. } => unreachable!(),
            }
        }
        Point::from_vec(out)
    }
}

fn project_leaf(leaf: &FeasibleSet, block: &mut [f64]) {
    match leaf {
        FeasibleSet::Box { lower, upper } => {
            for (v, (l, u)) in block.iter_mut().zip(lower.iter().zip(upper)) {
                *v = v.clamp(*l, *u);
            }
        }
        FeasibleSet::Ball { center, radius } => {
            let d2: f64 = block.iter().zip(center).map(|(v, c)| (v - c).powi(2)).sum();
            let d = d2.sqrt();
            if d > *radius {
                let s = radius / d;
                for (v, c) in block.iter_mut().zip(center) {
                    *v = c + s * (*v - c);
                }
            }
        }
        FeasibleSet::Simplex { .. } => project_simplex(block),
        FeasibleSet::Product { .. } => unreachable!(),
    }
}

/// Sort-based projection onto the probability simplex.
fn project_simplex(block: &mut [f64]) {
    let mut sorted = block.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for v in block.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dgf {
    #[default]
    SquaredEuclidean,
    NegativeEntropy,
}

/// A feasible set together with the distance-generating function that
/// induces its Bregman divergence and prox maps.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometrySpec {
    dgf: Dgf,
    set: FeasibleSet,
    leaves: Vec<(usize, FeasibleSet)>,
}

impl GeometrySpec {
    pub fn new(dgf: Dgf, set: FeasibleSet) -> Result<Self> {
        set.validate()?;
        let leaves: Vec<(usize, FeasibleSet)> =
            set.leaves().into_iter().map(|(o, l)| (o, l.clone())).collect();
        if dgf == Dgf::NegativeEntropy
            && leaves.iter().any(|(_, l)| !matches!(l, FeasibleSet::Simplex { .. }))
        {
            return Err(Error::Parameter(
                "negative entropy is only defined on simplices or products of simplices".into(),
            ));
        }
        Ok(Self { dgf, set, leaves })
    }

    pub fn euclidean(set: FeasibleSet) -> Result<Self> {
        Self::new(Dgf::SquaredEuclidean, set)
    }

    pub fn entropy(set: FeasibleSet) -> Result<Self> {
        Self::new(Dgf::NegativeEntropy, set)
    }

    pub fn dgf(&self) -> Dgf {
        self.dgf
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.set.contains(p.as_slice(), FEAS_TOL)
    }

    fn ensure_feasible(&self, p: &Point, what: &str) -> Result<()> {
        check_dim(self.dim(), p.len())?;
        if !self.contains(p) {
            return Err(Error::Domain(format!("{what} is not in the feasible set")));
        }
        Ok(())
    }

    /// Writes the minimiser of
    /// `<g, z> + beta V(outer, z) + eta V(inner, z)` into `out`.
    pub fn prox_two_anchor_into(
        &self,
        g: &[f64],
        outer: &[f64],
        beta: f64,
        inner: &[f64],
        eta: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.dim();
        check_dim(n, g.len())?;
        check_dim(n, outer.len())?;
        check_dim(n, inner.len())?;
        check_dim(n, out.len())?;
        if !(beta >= 0.0 && eta >= 0.0 && beta + eta > 0.0) || !(beta + eta).is_finite() {
            return Err(Error::Parameter(format!(
                "prox weights must be nonnegative with positive sum (beta = {beta}, eta = {eta})"
            )));
        }
        let w = beta + eta;
        match self.dgf {
            Dgf::SquaredEuclidean => {
                for i in 0..n {
                    out[i] = (beta * outer[i] + eta * inner[i] - g[i]) / w;
                }
                for (off, leaf) in &self.leaves {
                    let len = leaf.dim();
                    project_leaf(leaf, &mut out[*off..*off + len]);
                }
            }
            Dgf::NegativeEntropy => {
                for (off, leaf) in &self.leaves {
                    let r = *off..*off + leaf.dim();
                    entropy_prox_block(&g[r.clone()], &outer[r.clone()], beta, &inner[r.clone()], eta, &mut out[r])?;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("prox step produced a non-finite point".into()));
        }
        Ok(())
    }
}

fn entropy_prox_block(
    g: &[f64],
    outer: &[f64],
    beta: f64,
    inner: &[f64],
    eta: f64,
    out: &mut [f64],
) -> Result<()> {
    let w = beta + eta;
    let mut max = f64::NEG_INFINITY;
    for i in 0..out.len() {
        if !(outer[i] > 0.0 && inner[i] > 0.0) {
            return Err(Error::Domain(
                "entropy prox anchors must have strictly positive entries".into(),
            ));
        }
        let mut logit = -g[i];
        if beta > 0.0 {
            logit += beta * outer[i].ln();
        }
        if eta > 0.0 {
            logit += eta * inner[i].ln();
        }
        out[i] = logit / w;
        max = max.max(out[i]);
    }
    let mut sum = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let mut clipped = 0.0;
    for v in out.iter_mut() {
        *v = (*v / sum).max(ENTROPY_FLOOR);
        clipped += *v;
    }
    out.iter_mut().for_each(|v| *v /= clipped);
    Ok(())
}

/// `V(a, b)` under the geometry's distance-generating function.
pub fn bregman_divergence(geom: &GeometrySpec, a: &Point, b: &Point) -> Result<f64> {
    geom.ensure_feasible(a, "first argument")?;
    geom.ensure_feasible(b, "second argument")?;
    match geom.dgf {
        Dgf::SquaredEuclidean => Ok(0.5 * (a - b).norm_squared()),
        Dgf::NegativeEntropy => {
            let mut v = 0.0;
            for (ai, bi) in a.iter().zip(b.iter()) {
                if *ai <= 0.0 {
                    return Err(Error::Domain(
                        "entropy divergence requires an anchor with strictly positive entries".into(),
                    ));
                }
                if *bi > 0.0 {
                    v += bi * (bi / ai).ln();
                }
            }
            // exact zero can come out slightly negative through rounding
            Ok(v.max(0.0))
        }
    }
}

/// The unique minimiser of `<g, z> + beta V(anchor_outer, z) + eta V(anchor_inner, z)`
/// over the feasible set.
pub fn prox_two_anchor(
    geom: &GeometrySpec,
    g: &Point,
    anchor_outer: &Point,
    beta: f64,
    anchor_inner: &Point,
    eta: f64,
) -> Result<Point> {
    let mut out = Point::zeros(geom.dim());
    geom.prox_two_anchor_into(
        g.as_slice(),
        anchor_outer.as_slice(),
        beta,
        anchor_inner.as_slice(),
        eta,
        out.as_mut_slice(),
    )?;
    Ok(out)
}

pub fn project(set: &FeasibleSet, p: &Point) -> Result<Point> {
    set.project(p)
}

/// `sup_z V(z0, z)` over the feasible set. Exact for every shipped
/// set/geometry pair: the supremum of a convex function over a box or simplex
/// sits at a vertex, over a ball at the point antipodal to `z0`.
pub fn omega_sq_bound(geom: &GeometrySpec, z0: &Point) -> Result<f64> {
    geom.ensure_feasible(z0, "z0")?;
    let z = z0.as_slice();
    let mut total = 0.0;
    for (off, leaf) in &geom.leaves {
        let block = &z[*off..*off + leaf.dim()];
        total += match (geom.dgf, leaf) {
            (Dgf::SquaredEuclidean, FeasibleSet::Box { lower, upper }) => {
                0.5 * block
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| (v - l).powi(2).max((u - v).powi(2)))
                    .sum::<f64>()
            }
            (Dgf::SquaredEuclidean, FeasibleSet::Ball { center, radius }) => {
                let d = block.iter().zip(center).map(|(v, c)| (v - c).powi(2)).sum::<f64>().sqrt();
                0.5 * (d + radius).powi(2)
            }
            (Dgf::SquaredEuclidean, FeasibleSet::Simplex { .. }) => {
                let sq: f64 = block.iter().map(|v| v * v).sum();
                block.iter().map(|v| 0.5 * (sq - 2.0 * v + 1.0)).fold(0.0, f64::max)
            }
            (Dgf::NegativeEntropy, FeasibleSet::Simplex { .. }) => {
                let mut worst = 0.0f64;
                for v in block {
                    if *v <= 0.0 {
                        return Err(Error::Domain(
                            "entropy omega bound requires z0 in the simplex interior".into(),
                        ));
                    }
                    worst = worst.max(-v.ln());
                }
                worst
            }
            _ => unreachable!("rejected by GeometrySpec::new"),
        };
    }
    Ok(total)
}
