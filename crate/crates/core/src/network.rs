//! Communication graphs, gossip matrices and their spectra.
//!
//! The gossip matrix of a graph is its Laplacian `W̃ = D - A`: symmetric,
//! positive semidefinite, with the consensus vector `1` in its kernel. One
//! multiplication by `W̃ ⊗ I_d` is one synchronous round in which each node
//! exchanges its block with its neighbours.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Point;
use crate::solver::RunTrace;

/// Relative cutoff below which an eigenvalue counts as zero.
pub const EIG_RTOL: f64 = 1e-9;

const ER_MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Path,
    Star,
    Complete,
    ErdosRenyi { p: f64, seed: u64 },
}

/// On-disk network description: `kind`, `m`, and for Erdős–Rényi graphs
/// `p` and `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(flatten)]
    pub topology: Topology,
    pub m: usize,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<NetworkModel> {
        if self.m == 1 {
            return Ok(NetworkModel::single_node());
        }
        build_topology(&self.topology, self.m)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// An immutable communication network with its gossip matrix, the matrix
/// square root and spectral constants.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    m: usize,
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
    laplacian: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    lambda_max: f64,
    lambda_min_plus: f64,
}

pub fn build_topology(kind: &Topology, m: usize) -> Result<NetworkModel> {
    if m < 2 {
        return Err(Error::Parameter(format!("a network needs m >= 2 nodes, got {m}")));
    }
    let edges: Vec<(usize, usize)> = match kind {
        Topology::Path => (0..m - 1).map(|i| (i, i + 1)).collect(),
        Topology::Ring if m == 2 => vec![(0, 1)],
        Topology::Ring => (0..m).map(|i| (i.min((i + 1) % m), i.max((i + 1) % m))).collect(),
        Topology::Star => (1..m).map(|i| (0, i)).collect(),
        Topology::Complete => (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect(),
        Topology::ErdosRenyi { p, seed } => {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::Parameter(format!("edge probability p = {p} outside (0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut found = None;
            for _ in 0..ER_MAX_ATTEMPTS {
                let edges: Vec<(usize, usize)> = (0..m)
                    .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                    .filter(|_| rng.random::<f64>() < *p)
                    .collect();
                if is_connected(m, &edges) {
                    found = Some(edges);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::DegenerateNetwork(format!(
                    "no connected Erdos-Renyi graph with m = {m}, p = {p} in {ER_MAX_ATTEMPTS} draws"
                ))
            })?
        }
    };
    NetworkModel::from_edges(m, edges)
}

fn is_connected(m: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); m];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// `[-tol, 0)` are treated as round-off and clamped to zero.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Domain(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    let asym = (a - a.transpose()).amax();
    if asym > tol {
        return Err(Error::Domain(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -tol {
            return Err(Error::Domain(format!("matrix has negative eigenvalue {min:e}")));
        }
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let w = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

impl NetworkModel {
    /// A network given by an undirected edge list on nodes `0..m`.
    pub fn from_edges(m: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if m < 2 {
            return Err(Error::Parameter(format!("a network needs m >= 2 nodes, got {m}")));
        }
        let mut laplacian = DMatrix::zeros(m, m);
        let mut neighbours = vec![Vec::new(); m];
        for &(i, j) in &edges {
            if i >= m || j >= m || i == j {
                return Err(Error::Parameter(format!("invalid edge ({i}, {j}) for m = {m}")));
            }
            laplacian[(i, j)] -= 1.0;
            laplacian[(j, i)] -= 1.0;
            laplacian[(i, i)] += 1.0;
            laplacian[(j, j)] += 1.0;
            neighbours[i].push(j);
            neighbours[j].push(i);
        }
        if !is_connected(m, &edges) {
            return Err(Error::DegenerateNetwork("graph is not connected".into()));
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(laplacian.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let lambda_max = *eigenvalues.last().expect("m >= 2");
        let cutoff = EIG_RTOL * lambda_max;
        let lambda_min_plus = eigenvalues
            .iter()
            .copied()
            .find(|l| *l > cutoff)
            .ok_or_else(|| Error::DegenerateNetwork("gossip matrix is zero".into()))?;
        let sqrt = matrix_sqrt_psd(&laplacian, 1e-9 * lambda_max.max(1.0))?;
        Ok(Self {
            m,
            edges,
            neighbours,
            laplacian,
            sqrt,
            eigenvalues,
            lambda_max,
            lambda_min_plus,
        })
    }

    /// The one-node "network": no edges, zero gossip matrix.
    pub fn single_node() -> Self {
        Self {
            m: 1,
            edges: Vec::new(),
            neighbours: vec![Vec::new()],
            laplacian: DMatrix::zeros(1, 1),
            sqrt: DMatrix::zeros(1, 1),
            eigenvalues: vec![0.0],
            lambda_max: 0.0,
            lambda_min_plus: 0.0,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The gossip matrix `W̃`.
    pub fn gossip_matrix(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// `W = W̃^{1/2}`. Diagnostics only; never used to move data between nodes.
    pub fn sqrt_matrix(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    /// Eigenvalues of `W̃` in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Smallest eigenvalue above the `EIG_RTOL * lambda_max` cutoff; zero for
    /// the single-node network.
    pub fn lambda_min_plus(&self) -> f64 {
        self.lambda_min_plus
    }

    /// `lambda_max / lambda_min_plus`; one for the single-node network.
    pub fn chi(&self) -> f64 {
        if self.m == 1 {
            1.0
        } else {
            self.lambda_max / self.lambda_min_plus
        }
    }

    /// `(W̃ ⊗ I_block) v`, computed by per-edge exchanges: node `i` receives
    /// `v_j` from every neighbour `j` and forms `Σ_j (v_i - v_j)`.
    pub fn gossip(&self, stacked: &[f64], block: usize) -> Result<Point> {
        check_dim(self.m * block, stacked.len())?;
        let mut out = Point::zeros(stacked.len());
        for (i, nbrs) in self.neighbours.iter().enumerate() {
            let vi = &stacked[i * block..(i + 1) * block];
            let oi = &mut out.as_mut_slice()[i * block..(i + 1) * block];
            for &j in nbrs {
                let vj = &stacked[j * block..(j + 1) * block];
                for c in 0..block {
                    oi[c] += vi[c] - vj[c];
                }
            }
        }
        Ok(out)
    }

    /// `v^T (W̃ ⊗ I) v = Σ_edges |v_i - v_j|^2`.
    pub fn quadratic_form(&self, stacked: &[f64], block: usize) -> Result<f64> {
        check_dim(self.m * block, stacked.len())?;
        Ok(self
            .edges
            .iter()
            .map(|&(i, j)| {
                (0..block)
                    .map(|c| (stacked[i * block + c] - stacked[j * block + c]).powi(2))
                    .sum::<f64>()
            })
            .sum())
    }

    /// `(M ⊗ I_block) v` for a dense `m x m` matrix.
    pub fn dense_apply(matrix: &DMatrix<f64>, stacked: &[f64], block: usize) -> Result<Point> {
        let m = matrix.nrows();
        check_dim(m * block, stacked.len())?;
        // rows of `blocks` are node blocks
        let blocks = DMatrix::from_row_slice(m, block, stacked);
        let prod = matrix * blocks;
        Ok(Point::from_iterator(m * block, prod.transpose().iter().copied()))
    }

    /// Writes `W̃` (or `W`) as dense CSV without a header.
    pub fn write_matrix_csv<W: Write>(matrix: &DMatrix<f64>, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for r in 0..matrix.nrows() {
            w.write_record(matrix.row(r).iter().map(|v| v.to_string()))
                .map_err(|e| Error::Parse(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::Parse(format!("csv flush: {e}")))?;
        Ok(())
    }
}

/// One gossip round on a stacked vector; bumps the trace's round counter.
pub fn communication_round(
    net: &NetworkModel,
    stacked: &Point,
    block: usize,
    counter: &mut RunTrace,
) -> Result<Point> {
    let out = net.gossip(stacked.as_slice(), block)?;
    counter.communication_rounds += 1;
    Ok(out)
}

/// `|(W ⊗ I) v|` with `W` the square root of the gossip matrix.
pub fn consensus_violation(net: &NetworkModel, stacked: &Point, block: usize) -> Result<f64> {
    Ok(NetworkModel::dense_apply(&net.sqrt, stacked.as_slice(), block)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spectrum(kind: Topology, m: usize) -> Vec<f64> {
        build_topology(&kind, m).unwrap().eigenvalues().to_vec()
    }

    #[test]
    fn closed_form_spectra() {
        let k3 = spectrum(Topology::Complete, 3);
        for (got, want) in k3.iter().zip([0.0, 3.0, 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let ring = spectrum(Topology::Ring, 4);
        for (got, want) in ring.iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let path = build_topology(&Topology::Path, 2).unwrap();
        assert_abs_diff_eq!(path.lambda_max(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(path.chi(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn small_networks_are_rejected() {
        assert!(matches!(build_topology(&Topology::Ring, 1), Err(Error::Parameter(_))));
        assert!(NetworkModel::from_edges(3, vec![(0, 1)]).is_err());
    }

    #[test]
    fn erdos_renyi_is_connected_and_reproducible() {
        let t = Topology::ErdosRenyi { p: 0.3, seed: 11 };
        let a = build_topology(&t, 12).unwrap();
        let b = build_topology(&t, 12).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!(a.lambda_min_plus() > 0.0);
    }

    #[test]
    fn sqrt_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(matrix_sqrt_psd(&id, 1e-12).unwrap(), id, epsilon = 1e-14);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[0.0, 4.0]));
        let w = matrix_sqrt_psd(&d, 1e-12).unwrap();
        assert_abs_diff_eq!(w, DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[0.0, 2.0])), epsilon = 1e-14);
        let ring = build_topology(&Topology::Ring, 4).unwrap();
        let w = ring.sqrt_matrix();
        assert!((w * w - ring.gossip_matrix()).norm() < 1e-8);
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(matrix_sqrt_psd(&asym, 1e-9), Err(Error::Domain(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(matrix_sqrt_psd(&neg, 1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn gossip_round_examples() {
        let path = build_topology(&Topology::Path, 2).unwrap();
        let mut trace = RunTrace::new();
        let v = Point::from_row_slice(&[3.0, 1.0]);
        let out = communication_round(&path, &v, 1, &mut trace).unwrap();
        assert_eq!(out, Point::from_row_slice(&[2.0, -2.0]));
        assert_eq!(trace.communication_rounds, 1);
        let consensus = Point::from_row_slice(&[0.7, 0.7]);
        assert_eq!(communication_round(&path, &consensus, 1, &mut trace).unwrap(), Point::zeros(2));
        assert_eq!(trace.communication_rounds, 2);
    }

    #[test]
    fn consensus_violation_examples() {
        let path = build_topology(&Topology::Path, 2).unwrap();
        let v = Point::from_row_slice(&[1.0, 0.0]);
        // |W v|^2 = v^T W̃ v = 1 for a single unit-weight edge
        assert_abs_diff_eq!(consensus_violation(&path, &v, 1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            consensus_violation(&path, &(v.clone() * -3.0), 1).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        let c = Point::from_row_slice(&[0.4, 0.4]);
        assert_abs_diff_eq!(consensus_violation(&path, &c, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = NetworkSpec {
            topology: Topology::ErdosRenyi { p: 0.5, seed: 3 },
            m: 6,
        };
        let text = spec.to_toml().unwrap();
        assert!(text.contains("kind = \"erdos_renyi\""));
        assert_eq!(NetworkSpec::from_toml(&text).unwrap(), spec);
    }
}
