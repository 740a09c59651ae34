use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{FeasibleSet, Point};
use crate::penalty::{LocalSaddle, StackedSpp};

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `f(x, y) = |B x - c|_1 + yᵀ C x - w |y|_1`.
#[derive(Clone, Debug)]
pub struct L1Local {
    pub b: DMatrix<f64>,
    pub c: Point,
    pub coupling: DMatrix<f64>,
    pub y_weight: f64,
}

impl L1Local {
    fn residual(&self, x: &[f64]) -> Point {
        &self.b * Point::from_row_slice(x) - &self.c
    }
}

impl LocalSaddle for L1Local {
    fn dim_x(&self) -> usize {
        self.b.ncols()
    }
    fn dim_y(&self) -> usize {
        self.coupling.nrows()
    }
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let xv = Point::from_row_slice(x);
        let yv = Point::from_row_slice(y);
        self.residual(x).lp_norm(1) + yv.dot(&(&self.coupling * xv)) - self.y_weight * yv.lp_norm(1)
    }
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Point {
        let s = self.residual(x).map(sign);
        self.b.tr_mul(&s) + self.coupling.tr_mul(&Point::from_row_slice(y))
    }
    fn grad_y(&self, x: &[f64], y: &[f64]) -> Point {
        &self.coupling * Point::from_row_slice(x) - Point::from_row_slice(y).map(sign) * self.y_weight
    }
}

/// ℓ1-regularised bilinear saddle on boxes `[-r, r]^{d_x} × [-r, r]^{d_y}`.
#[derive(Clone, Debug)]
pub struct L1SaddleInstance {
    locals: Vec<L1Local>,
    radius: f64,
    spp: Arc<StackedSpp>,
}

pub fn make_l1_saddle(
    b_list: Vec<DMatrix<f64>>,
    c_list: Vec<Point>,
    coupling_list: Vec<DMatrix<f64>>,
    box_radius: f64,
) -> Result<L1SaddleInstance> {
    make_l1_saddle_weighted(b_list, c_list, coupling_list, box_radius, 1.0)
}

/// As [`make_l1_saddle`] with `w |y|_1` in place of `|y|_1`.
pub fn make_l1_saddle_weighted(
    b_list: Vec<DMatrix<f64>>,
    c_list: Vec<Point>,
    coupling_list: Vec<DMatrix<f64>>,
    box_radius: f64,
    y_weight: f64,
) -> Result<L1SaddleInstance> {
    if !(box_radius > 0.0 && box_radius.is_finite()) {
        return Err(Error::Parameter(format!("box_radius must be > 0, got {box_radius}")));
    }
    if !(y_weight >= 0.0 && y_weight.is_finite()) {
        return Err(Error::Parameter(format!("y_weight must be >= 0, got {y_weight}")));
    }
    let m = b_list.len();
    if m == 0 {
        return Err(Error::Parameter("an l1 saddle needs at least one node".into()));
    }
    check_dim(m, c_list.len())?;
    check_dim(m, coupling_list.len())?;
    let dx = b_list[0].ncols();
    let dy = coupling_list[0].nrows();
    let mut locals = Vec::with_capacity(m);
    for ((b, c), coupling) in b_list.into_iter().zip(c_list).zip(coupling_list) {
        check_dim(dx, b.ncols())?;
        check_dim(b.nrows(), c.len())?;
        check_dim(dx, coupling.ncols())?;
        check_dim(dy, coupling.nrows())?;
        locals.push(L1Local {
            b,
            c,
            coupling,
            y_weight,
        });
    }
    let shared: Vec<Arc<dyn LocalSaddle>> = locals
        .iter()
        .map(|l| Arc::new(l.clone()) as Arc<dyn LocalSaddle>)
        .collect();
    let spp = StackedSpp::new(
        shared,
        FeasibleSet::cube(dx, box_radius)?,
        FeasibleSet::cube(dy, box_radius)?,
    )?;
    Ok(L1SaddleInstance {
        locals,
        radius: box_radius,
        spp: Arc::new(spp),
    })
}

/// `m` nodes with sparse `B_i` (one nonzero per row, `d_x` rows), `c_i`
/// and `C_i` uniform; reproducible from `seed`.
pub fn random_l1_saddle(m: usize, dx: usize, dy: usize, radius: f64, seed: u64) -> Result<L1SaddleInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bs = Vec::new();
    let mut cs = Vec::new();
    let mut cps = Vec::new();
    for _ in 0..m.max(1) {
        let mut b = DMatrix::zeros(dx, dx);
        for r in 0..dx {
            let col = rng.random_range(0..dx);
            b[(r, col)] = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        bs.push(b);
        cs.push(Point::from_fn(dx, |_, _| rng.random_range(-radius..radius)));
        cps.push(DMatrix::from_fn(dy, dx, |_, _| rng.random_range(-1.0..1.0)));
    }
    make_l1_saddle(bs, cs, cps, radius)
}

/// `min_{|t| <= r} Σ wₖ|bₖ t - cₖ| + lin t + (mu/2) t²`.
///
/// The objective is convex and piecewise quadratic with kinks at `cₖ/bₖ`,
/// so the minimum is attained at an endpoint, a kink, or a stationary point
/// of one of the pieces.
pub fn min_scalar_piecewise(terms: &[(f64, f64, f64)], lin: f64, mu: f64, r: f64) -> f64 {
    let eval = |t: f64| -> f64 {
        terms.iter().map(|&(b, c, w)| w * (b * t - c).abs()).sum::<f64>() + lin * t + 0.5 * mu * t * t
    };
    let mut kinks: Vec<f64> = terms
        .iter()
        .filter(|(b, _, w)| *b != 0.0 && *w != 0.0)
        .map(|(b, c, _)| c / b)
        .filter(|t| t.abs() < r)
        .collect();
    kinks.push(-r);
    kinks.push(r);
    kinks.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    for t in &kinks {
        best = best.min(eval(*t));
    }
    if mu > 0.0 {
        for pair in kinks.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let slope: f64 = terms.iter().map(|&(b, c, w)| w * b * sign(b * mid - c)).sum::<f64>() + lin;
            let t = (-slope / mu).clamp(pair[0], pair[1]);
            best = best.min(eval(t));
        }
    }
    best
}

impl L1SaddleInstance {
    pub fn spp(&self) -> &Arc<StackedSpp> {
        &self.spp
    }

    pub fn locals(&self) -> &[L1Local] {
        &self.locals
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Whether every row of every `B_i` has at most one nonzero, which makes
    /// the averaged objective separable across coordinates of `x`.
    pub fn is_separable(&self) -> bool {
        self.locals
            .iter()
            .all(|l| l.b.row_iter().all(|row| row.iter().filter(|v| **v != 0.0).count() <= 1))
    }

    /// Analytic bound on `|H|` over the boxes.
    pub fn operator_bound(&self) -> f64 {
        let (dx, dy) = (self.spp.dim_x() as f64, self.spp.dim_y() as f64);
        let r = self.radius;
        self.locals
            .iter()
            .map(|l| {
                let cn = l.coupling.singular_values().max();
                let bn = l.b.singular_values().max();
                let hx = bn * (l.b.nrows() as f64).sqrt() + cn * r * dy.sqrt();
                let hy = cn * r * dx.sqrt() + l.y_weight * dy.sqrt();
                hx * hx + hy * hy
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Bounds on the stacked `x`- and `y`-subgradients of `F`.
    pub fn subgradient_bounds(&self) -> (f64, f64) {
        let (dx, dy) = (self.spp.dim_x() as f64, self.spp.dim_y() as f64);
        let r = self.radius;
        let (mut sx, mut sy) = (0.0, 0.0);
        for l in &self.locals {
            let cn = l.coupling.singular_values().max();
            let bn = l.b.singular_values().max();
            sx += (bn * (l.b.nrows() as f64).sqrt() + cn * r * dy.sqrt()).powi(2);
            sy += (cn * r * dx.sqrt() + l.y_weight * dy.sqrt()).powi(2);
        }
        (f64::sqrt(sx), f64::sqrt(sy))
    }

    /// `max_y [F(x, y) - mu/2 |y|²] - min_x [F(x, y) + mu/2 |x|²] + mu/2 (|x|² + |y|²)`
    /// for the averaged objective `F = (1/m) Σ f_i`, by per-coordinate best
    /// responses. With `mu = 0` this is the primal-dual gap; with `mu > 0`
    /// it bounds `sup Q` of the VI with `G = mu/2 |z|²` from above.
    ///
    /// `None` when `B_i` has a row with two or more nonzeros.
    pub fn regularized_gap(&self, x: &Point, y: &Point, mu: f64) -> Result<Option<f64>> {
        let (dx, dy) = (self.spp.dim_x(), self.spp.dim_y());
        check_dim(dx, x.len())?;
        check_dim(dy, y.len())?;
        if !self.is_separable() {
            return Ok(None);
        }
        let m = self.locals.len() as f64;
        let r = self.radius;
        let c_bar = self.locals.iter().fold(DMatrix::zeros(dy, dx), |acc, l| acc + &l.coupling) / m;
        let w = self.locals[0].y_weight;
        let l1_part = |xv: &Point| -> f64 {
            self.locals.iter().map(|l| (&l.b * xv - &l.c).lp_norm(1)).sum::<f64>() / m
        };

        // max over y of yᵀ(C̄x) - w|y|_1 - mu/2 |y|², coordinate by coordinate
        let a = &c_bar * x;
        let max_y: f64 = a
            .iter()
            .map(|aj| -min_scalar_piecewise(&[(1.0, 0.0, w)], -aj, mu, r))
            .sum::<f64>()
            + l1_part(x);

        // min over x of (1/m) Σ|B_i x - c_i|_1 + (C̄ᵀy)ᵀx + mu/2 |x|²
        let g = c_bar.tr_mul(y);
        let mut per_coord: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); dx];
        let mut constant = 0.0;
        for l in &self.locals {
            for (row, ci) in l.b.row_iter().zip(l.c.iter()) {
                match row.iter().position(|v| *v != 0.0) {
                    Some(k) => per_coord[k].push((row[k], *ci, 1.0 / m)),
                    None => constant += ci.abs() / m,
                }
            }
        }
        let min_x: f64 = constant
            + per_coord
                .iter()
                .zip(g.iter())
                .map(|(terms, gk)| min_scalar_piecewise(terms, *gk, mu, r))
                .sum::<f64>()
            - w * y.lp_norm(1);

        Ok(Some(max_y - min_x + 0.5 * mu * (x.norm_squared() + y.norm_squared())))
    }

    /// Primal-dual gap of the averaged problem at the node averages of `z`.
    pub fn averaged_gap(&self, z: &Point) -> Result<Option<f64>> {
        let (x, y) = self.spp.block_average(z)?;
        self.regularized_gap(&x, &y, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn brute_min(terms: &[(f64, f64, f64)], lin: f64, mu: f64, r: f64) -> f64 {
        (0..=200_000)
            .map(|i| -r + 2.0 * r * i as f64 / 200_000.0)
            .map(|t| terms.iter().map(|&(b, c, w)| w * (b * t - c).abs()).sum::<f64>() + lin * t + 0.5 * mu * t * t)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn scalar_minimizer_matches_grid() {
        let cases: [(&[(f64, f64, f64)], f64, f64); 4] = [
            (&[(1.0, 0.3, 1.0)], 0.0, 0.0),
            (&[(2.0, -0.5, 0.5), (-1.0, 0.2, 1.0)], 0.7, 0.0),
            (&[(1.0, 0.0, 0.1)], -0.4, 1.0),
            (&[(1.5, 0.9, 0.3), (0.5, -0.1, 0.2)], 0.05, 2.5),
        ];
        for (terms, lin, mu) in cases {
            let got = min_scalar_piecewise(terms, lin, mu, 1.0);
            assert_abs_diff_eq!(got, brute_min(terms, lin, mu, 1.0), epsilon = 1e-8);
        }
    }

    #[test]
    fn identity_data_has_origin_solution() {
        let g = make_l1_saddle(
            vec![DMatrix::identity(2, 2)],
            vec![Point::zeros(2)],
            vec![DMatrix::zeros(2, 2)],
            1.0,
        )
        .unwrap();
        let zero = Point::zeros(2);
        assert_abs_diff_eq!(g.regularized_gap(&zero, &zero, 0.0).unwrap().unwrap(), 0.0);
        let off = Point::from_row_slice(&[0.5, -0.25]);
        assert_abs_diff_eq!(g.regularized_gap(&off, &zero, 0.0).unwrap().unwrap(), 0.75, epsilon = 1e-14);
    }

    #[test]
    fn zero_data_operator_is_sign_pattern() {
        let g = make_l1_saddle(
            vec![DMatrix::zeros(2, 2)],
            vec![Point::zeros(2)],
            vec![DMatrix::zeros(3, 2)],
            1.0,
        )
        .unwrap();
        use crate::solver::Operator;
        let z = Point::from_row_slice(&[0.1, -0.2, 0.3, 0.0, -0.4]);
        let h = g.spp().apply(&z);
        assert_eq!(h.as_slice(), &[0.0, 0.0, 1.0, 0.0, -1.0]);
        assert!(h.norm() <= (3.0f64).sqrt());
    }

    #[test]
    fn gap_matches_brute_force_best_responses() {
        let g = random_l1_saddle(2, 2, 2, 1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = (
            Point::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
            Point::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
        );
        let f = |xv: &Point, yv: &Point| -> f64 {
            g.locals()
                .iter()
                .map(|l| l.value(xv.as_slice(), yv.as_slice()))
                .sum::<f64>()
                / 2.0
        };
        let grid: Vec<f64> = (0..=400).map(|i| -1.0 + i as f64 / 200.0).collect();
        let mut best_y = f64::NEG_INFINITY;
        let mut best_x = f64::INFINITY;
        for a in &grid {
            for b in &grid {
                let p = Point::from_row_slice(&[*a, *b]);
                best_y = best_y.max(f(&x, &p));
                best_x = best_x.min(f(&p, &y));
            }
        }
        let gap = g.regularized_gap(&x, &y, 0.0).unwrap().unwrap();
        assert!(gap >= best_y - best_x - 1e-12);
        assert_abs_diff_eq!(gap, best_y - best_x, epsilon = 2e-2);
    }

    #[test]
    fn dense_rows_disable_the_closed_form() {
        let g = make_l1_saddle(
            vec![DMatrix::from_element(2, 2, 1.0)],
            vec![Point::zeros(2)],
            vec![DMatrix::zeros(2, 2)],
            1.0,
        )
        .unwrap();
        assert_eq!(g.regularized_gap(&Point::zeros(2), &Point::zeros(2), 0.0).unwrap(), None);
    }
}
