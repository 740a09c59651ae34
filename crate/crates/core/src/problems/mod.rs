//! Concrete instance families with ground-truth gap oracles, and numerical
//! certification of the inexact-oracle condition.

mod certify;
pub mod consensus_qp;
pub mod io;
mod l1_saddle;
mod matrix_game;
mod qp;

use std::sync::Arc;

pub use certify::{certify_inexact_oracle, sample_extreme, sampled_operator_bound, CertificateReport, CERT_TOL};
pub use l1_saddle::{
    make_l1_saddle, make_l1_saddle_weighted, min_scalar_piecewise, random_l1_saddle, L1Local, L1SaddleInstance,
};
pub use matrix_game::{
    exact_gap_matrix_game, make_matrix_game, matching_pennies, random_matrix_game, BilinearLocal,
    MatrixGameInstance,
};
pub use qp::maximize_concave_on_simplices;

use crate::error::Result;
use crate::geometry::Point;
use crate::penalty::StackedSpp;

/// Any shipped instance family.
#[derive(Clone, Debug)]
pub enum Instance {
    MatrixGame(MatrixGameInstance),
    L1Saddle(L1SaddleInstance),
}

impl Instance {
    pub fn spp(&self) -> &Arc<StackedSpp> {
        match self {
            Instance::MatrixGame(g) => g.spp(),
            Instance::L1Saddle(s) => s.spp(),
        }
    }

    /// Uniform bounds on the stacked `x`- and `y`-subgradients of `F`.
    pub fn subgradient_bounds(&self) -> (f64, f64) {
        match self {
            Instance::MatrixGame(g) => g.subgradient_bounds(),
            Instance::L1Saddle(s) => s.subgradient_bounds(),
        }
    }

    /// Primal-dual gap of the node-averaged problem at the node averages of
    /// `z`, when an exact oracle exists.
    pub fn averaged_gap(&self, z: &Point) -> Result<Option<f64>> {
        match self {
            Instance::MatrixGame(g) => g.averaged_gap(z).map(Some),
            Instance::L1Saddle(s) => s.averaged_gap(z),
        }
    }
}

/// Bound `L0` on `|H|` over the stacked feasible set: analytic for matrix
/// games, `1.1 ×` the largest sampled norm otherwise.
pub fn operator_bound_l0(inst: &Instance, samples: usize, seed: u64) -> Result<f64> {
    match inst {
        Instance::MatrixGame(g) => Ok(g.operator_bound()),
        Instance::L1Saddle(s) => {
            let spp = s.spp();
            sampled_operator_bound(spp.as_ref(), &spp.feasible_set(), samples, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_bound_never_exceeds_the_analytic_one_for_games() {
        let g = random_matrix_game(3, 3, 2, 17).unwrap();
        let spp = g.spp();
        let sampled = sampled_operator_bound(spp.as_ref(), &spp.feasible_set(), 2000, 1).unwrap() / 1.1;
        assert!(sampled <= g.operator_bound() + 1e-12);
        let inst = Instance::MatrixGame(g.clone());
        assert_eq!(operator_bound_l0(&inst, 1, 0).unwrap(), g.operator_bound());
    }

    #[test]
    fn sampled_l1_bound_is_below_the_analytic_one() {
        let s = random_l1_saddle(2, 3, 2, 1.0, 4).unwrap();
        let sampled = operator_bound_l0(&Instance::L1Saddle(s.clone()), 2000, 2).unwrap() / 1.1;
        assert!(sampled <= s.operator_bound());
    }
}
