use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::qp::maximize_concave_on_simplices;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{FeasibleSet, Point};
use crate::network::NetworkModel;
use crate::penalty::{LocalSaddle, PenaltyCoefficients, StackedSpp};

/// `f(x, y) = yᵀ A x` with `A` of shape `d_y × d_x`.
#[derive(Clone, Debug)]
pub struct BilinearLocal {
    pub a: DMatrix<f64>,
}

impl LocalSaddle for BilinearLocal {
    fn dim_x(&self) -> usize {
        self.a.ncols()
    }
    fn dim_y(&self) -> usize {
        self.a.nrows()
    }
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = 0.0;
        for (r, yr) in y.iter().enumerate() {
            for (c, xc) in x.iter().enumerate() {
                v += yr * self.a[(r, c)] * xc;
            }
        }
        v
    }
    fn grad_x(&self, _x: &[f64], y: &[f64]) -> Point {
        self.a.tr_mul(&Point::from_row_slice(y))
    }
    fn grad_y(&self, x: &[f64], _y: &[f64]) -> Point {
        &self.a * Point::from_row_slice(x)
    }
}

/// A zero-sum matrix game split across nodes: node `i` holds `A_i`, the
/// game being solved is `min_x max_y yᵀ Ā x` with `Ā` the node average.
#[derive(Clone, Debug)]
pub struct MatrixGameInstance {
    matrices: Vec<DMatrix<f64>>,
    a_bar: DMatrix<f64>,
    spp: Arc<StackedSpp>,
}

pub fn make_matrix_game(a_list: Vec<DMatrix<f64>>) -> Result<MatrixGameInstance> {
    let first = a_list
        .first()
        .ok_or_else(|| Error::Parameter("a matrix game needs at least one payoff matrix".into()))?;
    let (dy, dx) = first.shape();
    if dx == 0 || dy == 0 {
        return Err(Error::Parameter("payoff matrices must be non-empty".into()));
    }
    for a in &a_list {
        check_dim(dy, a.nrows())?;
        check_dim(dx, a.ncols())?;
    }
    let a_bar = a_list.iter().fold(DMatrix::zeros(dy, dx), |acc, a| acc + a) / a_list.len() as f64;
    let locals: Vec<Arc<dyn LocalSaddle>> = a_list
        .iter()
        .map(|a| Arc::new(BilinearLocal { a: a.clone() }) as Arc<dyn LocalSaddle>)
        .collect();
    let spp = StackedSpp::new(locals, FeasibleSet::simplex(dx)?, FeasibleSet::simplex(dy)?)?;
    Ok(MatrixGameInstance {
        matrices: a_list,
        a_bar,
        spp: Arc::new(spp),
    })
}

/// Matching pennies `[[1, -1], [-1, 1]]` on every node.
pub fn matching_pennies(m: usize) -> Result<MatrixGameInstance> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    make_matrix_game(vec![a; m.max(1)])
}

/// `m` independent payoff matrices with entries uniform on `[-1, 1]`.
pub fn random_matrix_game(m: usize, dx: usize, dy: usize, seed: u64) -> Result<MatrixGameInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_list = (0..m.max(1))
        .map(|_| DMatrix::from_fn(dy, dx, |_, _| rng.random_range(-1.0..=1.0)))
        .collect();
    make_matrix_game(a_list)
}

/// `max_j (Ā x)_j - min_i (Āᵀ y)_i`.
pub fn exact_gap_matrix_game(a_bar: &DMatrix<f64>, x: &Point, y: &Point) -> Result<f64> {
    check_dim(a_bar.ncols(), x.len())?;
    check_dim(a_bar.nrows(), y.len())?;
    let best_y = (a_bar * x).max();
    let best_x = a_bar.tr_mul(y).min();
    Ok(best_y - best_x)
}

fn max_row_norm_sq(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
}

fn max_col_norm_sq(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max)
}

impl MatrixGameInstance {
    pub fn spp(&self) -> &Arc<StackedSpp> {
        &self.spp
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.a_bar
    }

    /// Exact bound on `|H|` over the stacked simplices: `Aᵢᵀyᵢ` is a convex
    /// combination of rows, `Aᵢxᵢ` of columns.
    pub fn operator_bound(&self) -> f64 {
        self.matrices
            .iter()
            .map(|a| max_row_norm_sq(a) + max_col_norm_sq(a))
            .sum::<f64>()
            .sqrt()
    }

    /// Bounds on the stacked `x`- and `y`-gradients of `F`.
    pub fn subgradient_bounds(&self) -> (f64, f64) {
        let bx: f64 = self.matrices.iter().map(max_row_norm_sq).sum();
        let by: f64 = self.matrices.iter().map(max_col_norm_sq).sum();
        (bx.sqrt(), by.sqrt())
    }

    /// Lipschitz constant of the stacked operator: `max_i |A_i|_2`.
    pub fn operator_lipschitz(&self) -> f64 {
        self.matrices
            .iter()
            .map(|a| a.singular_values().max())
            .fold(0.0, f64::max)
    }

    /// Exact primal-dual gap of the averaged game at the node averages of `z`.
    pub fn averaged_gap(&self, z: &Point) -> Result<f64> {
        let (x, y) = self.spp.block_average(z)?;
        exact_gap_matrix_game(&self.a_bar, &x, &y)
    }

    /// Upper bound on `sup_z Q(z̄, z)` for the penalized stacked VI, tight to
    /// `tol`. For bilinear `H` the supremum separates into two concave
    /// quadratic programs over products of simplices.
    pub fn penalized_gap(
        &self,
        net_x: &NetworkModel,
        net_y: &NetworkModel,
        coeffs: &PenaltyCoefficients,
        z_bar: &Point,
        tol: f64,
    ) -> Result<f64> {
        let spp = &self.spp;
        check_dim(spp.dim(), z_bar.len())?;
        let (m, dx, dy) = (spp.m(), spp.dim_x(), spp.dim_y());
        let zs = z_bar.as_slice();
        let (xs, ys) = spp.split(zs);
        let wa = coeffs.r_alpha_sq / coeffs.epsilon;
        let wb = coeffs.r_beta_sq / coeffs.epsilon;

        let g_bar = wa * net_x.quadratic_form(xs, dx)? + wb * net_y.quadratic_form(ys, dy)?;
        // max_y Σ yᵢᵀAᵢx̄ᵢ - wb yᵀW̃y
        let mut lin_y = Point::zeros(m * dy);
        // max_x -Σ ȳᵢᵀAᵢxᵢ - wa xᵀW̃x
        let mut lin_x = Point::zeros(m * dx);
        for (i, a) in self.matrices.iter().enumerate() {
            let xi = Point::from_row_slice(spp.x_block(zs, i));
            let yi = Point::from_row_slice(spp.y_block(zs, i));
            lin_y.rows_mut(i * dy, dy).copy_from(&(a * xi));
            lin_x.rows_mut(i * dx, dx).copy_from(&(-a.tr_mul(&yi)));
        }
        let up_y = maximize_concave_on_simplices(&lin_y, net_y, wb, m, dy, tol)?;
        let up_x = maximize_concave_on_simplices(&lin_x, net_x, wa, m, dx, tol)?;
        Ok(g_bar + up_y + up_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, Topology};
    use crate::penalty::penalty_coefficients;
    use crate::solver::{q_gap, Operator};
    use approx::assert_abs_diff_eq;

    fn pennies_bar() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
    }

    #[test]
    fn matching_pennies_gap_examples() {
        let a = pennies_bar();
        let half = Point::from_row_slice(&[0.5, 0.5]);
        assert_abs_diff_eq!(exact_gap_matrix_game(&a, &half, &half).unwrap(), 0.0);
        let e1 = Point::from_row_slice(&[1.0, 0.0]);
        assert_abs_diff_eq!(exact_gap_matrix_game(&a, &e1, &e1).unwrap(), 2.0);
    }

    #[test]
    fn constant_game_has_zero_gap() {
        let g = make_matrix_game(vec![DMatrix::zeros(1, 1)]).unwrap();
        let z = Point::from_row_slice(&[1.0, 1.0]);
        assert_eq!(g.averaged_gap(&z).unwrap(), 0.0);
    }

    #[test]
    fn analytic_bounds_for_pennies() {
        let g = matching_pennies(1).unwrap();
        assert_abs_diff_eq!(g.operator_bound(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.operator_lipschitz(), 2.0, epsilon = 1e-12);
        let g3 = matching_pennies(3).unwrap();
        let (bx, by) = g3.subgradient_bounds();
        assert_abs_diff_eq!(bx * bx, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(by * by, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_payoffs_are_rejected() {
        let r = make_matrix_game(vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unpenalized_gap_is_vertex_enumeration() {
        // with no penalty the supremum of Q is the stacked bilinear gap
        let g = random_matrix_game(1, 3, 2, 5).unwrap();
        let net = NetworkModel::single_node();
        let c = PenaltyCoefficients::none(0.1);
        let z = Point::from_row_slice(&[0.2, 0.3, 0.5, 0.9, 0.1]);
        let up = g.penalized_gap(&net, &net, &c, &z, 1e-12).unwrap();
        assert_abs_diff_eq!(up, g.averaged_gap(&z).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn penalized_gap_dominates_sampled_q() {
        let g = random_matrix_game(3, 2, 2, 9).unwrap();
        let net = build_topology(&Topology::Complete, 3).unwrap();
        let (bx, by) = g.subgradient_bounds();
        let c = penalty_coefficients(g.spp(), &net, &net, 0.2, bx, by).unwrap();
        let vi = crate::penalty::build_penalized_vi(
            g.spp().clone(),
            &net,
            &net,
            c,
            crate::penalty::OracleModel::Lipschitz { m: g.operator_lipschitz() },
            crate::geometry::Dgf::SquaredEuclidean,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z_bar = g.spp().sample(&mut rng);
        let up = g.penalized_gap(&net, &net, &c, &z_bar, 1e-10).unwrap();
        let mut best = f64::NEG_INFINITY;
        for _ in 0..2000 {
            let z = g.spp().sample(&mut rng);
            best = best.max(q_gap(&vi, &z_bar, &z).unwrap());
        }
        assert!(best <= up + 1e-9, "sampled {best} > bound {up}");
        assert!(up - best < 0.5 * up.abs().max(1.0));
        assert_eq!(g.spp().apply(&z_bar).len(), 12);
    }
}
