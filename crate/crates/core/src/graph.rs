//! Graph types and Laplacian algebra.
//!
//! An [`Adjacency`] holds a symmetric, nonnegative weight matrix with a zero
//! diagonal. A [`Laplacian`] is a member of the valid-Laplacian set: symmetric,
//! nonpositive off-diagonals, and each diagonal entry equal to the negated sum
//! of its row's off-diagonals.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative tolerance used when checking the zero-row-sum condition.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Symmetric nonnegative weight matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    weights: Matrix,
}

impl Adjacency {
    /// Validates `weights` and wraps it. Errors name the first violating pair.
    pub fn new(weights: Matrix) -> Result<Self> {
        let p = square_dim(&weights)?;
        for i in 0..p {
            for j in 0..p {
                let w = weights[(i, j)];
                if !w.is_finite() {
                    return Err(invalid(i, j, format!("weight {w} is not finite")));
                }
                if i == j {
                    if w != 0.0 {
                        return Err(invalid(i, j, format!("diagonal weight {w} is not zero")));
                    }
                    continue;
                }
                if w < 0.0 {
                    return Err(invalid(i, j, format!("negative weight {w}")));
                }
                if j > i && w != weights[(j, i)] {
                    return Err(invalid(
                        i,
                        j,
                        format!("asymmetric weights {w} vs {}", weights[(j, i)]),
                    ));
                }
            }
        }
        Ok(Adjacency { weights })
    }

    pub fn zeros(p: usize) -> Self {
        Adjacency {
            weights: Matrix::zeros(p, p),
        }
    }

    /// Builds a graph from undirected edges `(i, j, w)`. Repeated edges overwrite.
    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut weights = Matrix::zeros(p, p);
        for (i, j, w) in edges {
            if i >= p || j >= p {
                return Err(invalid(i, j, format!("node index out of range for {p} nodes")));
            }
            if i == j {
                return Err(invalid(i, j, "self loop".to_string()));
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        Adjacency::new(weights)
    }

    pub fn nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Edges with nonzero weight, `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = self.nodes();
        (0..p).flat_map(move |i| {
            ((i + 1)..p).filter_map(move |j| {
                let w = self.weights[(i, j)];
                (w != 0.0).then_some((i, j, w))
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.weights.row_iter().map(|r| r.sum()).collect()
    }

    pub fn laplacian(&self) -> Laplacian {
        Laplacian::from_adjacency(self)
    }

    pub fn into_inner(self) -> Matrix {
        self.weights
    }
}

/// A matrix in the valid-Laplacian set.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    entries: Matrix,
}

impl Laplacian {
    /// `D - W`.
    pub fn from_adjacency(w: &Adjacency) -> Self {
        let p = w.nodes();
        let mut entries = w.weights.map(|v| 0.0 - v);
        for i in 0..p {
            entries[(i, i)] = 0.0;
            entries[(i, i)] = -off_diagonal_row_sum(&entries, i);
        }
        Laplacian { entries }
    }

    pub fn zeros(p: usize) -> Self {
        Laplacian {
            entries: Matrix::zeros(p, p),
        }
    }

    /// Wraps `m` after checking set membership (row sums within [`ROW_SUM_TOL`]
    /// relative to the diagonal).
    pub fn try_from_matrix(m: Matrix) -> Result<Self> {
        let p = square_dim(&m)?;
        for i in 0..p {
            for j in 0..p {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(invalid(i, j, format!("entry {v} is not finite")));
                }
                if i != j {
                    if v > 0.0 {
                        return Err(invalid(i, j, format!("positive off-diagonal {v}")));
                    }
                    if j > i && v != m[(j, i)] {
                        return Err(invalid(i, j, format!("asymmetric entries {v} vs {}", m[(j, i)])));
                    }
                }
            }
            let off = off_diagonal_row_sum(&m, i);
            let diag = m[(i, i)];
            if (diag + off).abs() > ROW_SUM_TOL * diag.abs().max(1.0) {
                return Err(invalid(i, i, format!("row sum {} is not zero", diag + off)));
            }
        }
        Ok(Laplacian { entries: m })
    }

    pub fn nodes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_inner(self) -> Matrix {
        self.entries
    }

    /// Recovers `W` from the off-diagonals.
    pub fn adjacency(&self) -> Adjacency {
        let p = self.nodes();
        let mut weights = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    // `0.0 - x` keeps the zero pattern free of negative zeros.
                    weights[(i, j)] = 0.0 - self.entries[(i, j)];
                }
            }
        }
        Adjacency { weights }
    }
}

/// `D - W` for a raw weight matrix, validating it first.
pub fn laplacian_from_adjacency(weights: &Matrix) -> Result<Laplacian> {
    Ok(Laplacian::from_adjacency(&Adjacency::new(weights.clone())?))
}

/// Maps any square matrix into the valid-Laplacian set.
///
/// Off-diagonals are symmetrized and clamped to be nonpositive, which is the
/// exact Euclidean projection in off-diagonal coordinates; the diagonal is then
/// rebuilt from the row sums. The map is idempotent.
pub fn project_to_laplacian_set(m: &Matrix) -> Result<Laplacian> {
    let p = square_dim(m)?;
    if let Some((i, j)) = first_non_finite(m) {
        return Err(invalid(i, j, "entry is not finite".to_string()));
    }
    let mut entries = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let v = (0.5 * (m[(i, j)] + m[(j, i)])).min(0.0);
            // normalize -0.0 so the output is bit-stable under re-projection
            let v = if v == 0.0 { 0.0 } else { v };
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    for i in 0..p {
        entries[(i, i)] = -off_diagonal_row_sum(&entries, i);
    }
    Ok(Laplacian { entries })
}

/// Graph smoothness `tr(Lᵀ Φ L)` of the rows of `l`.
pub fn smoothness(l: &Matrix, phi: &Laplacian) -> Result<f64> {
    if l.nrows() != phi.nodes() {
        return Err(Error::Dimension(format!(
            "signal has {} rows but the Laplacian has {} nodes",
            l.nrows(),
            phi.nodes()
        )));
    }
    let phi_l = phi.matrix() * l;
    Ok(l.component_mul(&phi_l).sum())
}

/// K-nearest-neighbour similarity graph over the rows of `x`.
///
/// Each row is linked to its `k` nearest rows by Euclidean distance (ties broken
/// by index). Retained edges get Gaussian weights `exp(-d² / 2σ²)` where σ is
/// the median retained distance, and the directed choices are symmetrized by
/// taking the maximum.
pub fn knn_similarity_graph(x: &Matrix, k: usize) -> Result<Adjacency> {
    let p = x.nrows();
    if k == 0 || k >= p {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must satisfy 0 < K < {p} (number of rows)"
        )));
    }
    if let Some((i, j)) = first_non_finite(x) {
        return Err(invalid(i, j, "entry is not finite".to_string()));
    }

    let mut dist = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let d = (x.row(i) - x.row(j)).norm();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }

    let mut keep = vec![false; p * p];
    for i in 0..p {
        let mut order: Vec<usize> = (0..p).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        for &j in &order[..k] {
            keep[i.min(j) * p + i.max(j)] = true;
        }
    }

    let retained: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .filter(|&(i, j)| keep[i * p + j])
        .collect();
    let sigma = bandwidth(retained.iter().map(|&(i, j)| dist[(i, j)]).collect());

    let mut weights = Matrix::zeros(p, p);
    for (i, j) in retained {
        let d = dist[(i, j)];
        let w = (-(d * d) / (2.0 * sigma * sigma)).exp().max(f64::MIN_POSITIVE);
        weights[(i, j)] = w;
        weights[(j, i)] = w;
    }
    Ok(Adjacency { weights })
}

/// Median of the retained distances, falling back to the mean positive distance
/// (or 1) when the median collapses to zero.
fn bandwidth(mut d: Vec<f64>) -> f64 {
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if median > 0.0 {
        return median;
    }
    let positive: Vec<f64> = d.into_iter().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    }
}

fn off_diagonal_row_sum(m: &Matrix, i: usize) -> f64 {
    (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)]).sum()
}

fn square_dim(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn first_non_finite(m: &Matrix) -> Option<(usize, usize)> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .find(|&(i, j)| !m[(i, j)].is_finite())
}

fn invalid(i: usize, j: usize, reason: String) -> Error {
    Error::InvalidEntry { i, j, reason }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_adjacency(p: usize, rng: &mut ChaCha8Rng) -> Adjacency {
        let mut w = Matrix::zeros(p, p);
        for i in 0..p {
            for j in (i + 1)..p {
                let v = if rng.random_bool(0.6) { rng.random::<f64>() } else { 0.0 };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        Adjacency::new(w).unwrap()
    }

    /// Brute-force `½ Σ_ij W_ij ‖l_i − l_j‖²`.
    fn pairwise_smoothness(l: &Matrix, w: &Adjacency) -> f64 {
        let p = l.nrows();
        let mut s = 0.0;
        for i in 0..p {
            for j in 0..p {
                let d = (l.row(i) - l.row(j)).norm_squared();
                s += w.weight(i, j) * d;
            }
        }
        0.5 * s
    }

    #[test]
    fn empty_graph_has_zero_laplacian() {
        let phi = laplacian_from_adjacency(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(phi.matrix(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn single_edge_laplacian() {
        let w = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let phi = laplacian_from_adjacency(&w).unwrap();
        assert_eq!(phi.matrix(), &Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn random_laplacian_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_adjacency(5, &mut rng);
        let phi = w.laplacian();
        for i in 0..5 {
            assert!(phi.matrix().row(i).sum().abs() < 1e-12);
            for j in 0..5 {
                if i != j {
                    assert_eq!(phi.matrix()[(i, j)], -w.weight(i, j));
                }
            }
        }
        Laplacian::try_from_matrix(phi.into_inner()).unwrap();
    }

    #[test]
    fn rejects_asymmetric_and_negative_weights() {
        let w = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        match laplacian_from_adjacency(&w) {
            Err(Error::InvalidEntry { i: 0, j: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let w = Matrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        match laplacian_from_adjacency(&w) {
            Err(Error::InvalidEntry { i: 0, j: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(laplacian_from_adjacency(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn projection_fixes_valid_laplacians() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi = random_adjacency(6, &mut rng).laplacian();
        let projected = project_to_laplacian_set(phi.matrix()).unwrap();
        for (a, b) in projected.matrix().iter().zip(phi.matrix().iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn projection_clamps_positive_off_diagonals() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let phi = project_to_laplacian_set(&m).unwrap();
        assert_eq!(phi.matrix(), &Matrix::zeros(2, 2));
        assert!(project_to_laplacian_set(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn projection_beats_random_members_off_diagonal() {
        // Off-diagonal distance is what the projection minimizes; sample
        // random members of the set nearby and far away.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = 6;
        let m = Matrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let proj = project_to_laplacian_set(&m).unwrap();
        let off_dist = |phi: &Matrix| -> f64 {
            let mut s = 0.0;
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        s += (phi[(i, j)] - m[(i, j)]).powi(2);
                    }
                }
            }
            s
        };
        let best = off_dist(proj.matrix());
        for t in 0..1000 {
            let scale = if t % 2 == 0 { 0.1 } else { 1.0 };
            let mut w = proj.adjacency().into_inner();
            for i in 0..p {
                for j in (i + 1)..p {
                    let v = (w[(i, j)] + scale * rng.random_range(-1.0..1.0)).max(0.0);
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
            let candidate = Adjacency::new(w).unwrap().laplacian();
            assert!(best <= off_dist(candidate.matrix()) + 1e-12);
        }
    }

    #[test]
    fn smoothness_of_constant_rows_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_adjacency(4, &mut rng).laplacian();
        let row: Vec<f64> = (0..7).map(|_| rng.random()).collect();
        let l = Matrix::from_fn(4, 7, |_, j| row[j]);
        assert!(smoothness(&l, &phi).unwrap().abs() < 1e-12);
    }

    #[test]
    fn smoothness_single_edge() {
        let phi = laplacian_from_adjacency(&Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let l = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(smoothness(&l, &phi).unwrap(), 1.0);
        assert!(smoothness(&Matrix::zeros(3, 1), &phi).is_err());
    }

    #[test]
    fn smoothness_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = rng.random_range(2..12);
            let n = rng.random_range(1..12);
            let w = random_adjacency(p, &mut rng);
            let l = Matrix::from_fn(p, n, |_, _| rng.random_range(-2.0..2.0));
            let trace = smoothness(&l, &w.laplacian()).unwrap();
            let brute = pairwise_smoothness(&l, &w);
            assert!((trace - brute).abs() <= 1e-9 * brute.abs().max(1e-12));
        }
    }

    #[test]
    fn knn_identical_rows_get_unit_weight() {
        let x = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 5.0, -3.0]);
        let w = knn_similarity_graph(&x, 1).unwrap();
        assert_eq!(w.weight(0, 1), 1.0);
    }

    #[test]
    fn knn_equidistant_points_form_complete_graph() {
        let h = 3f64.sqrt() / 2.0;
        let x = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.5, h]);
        let w = knn_similarity_graph(&x, 2).unwrap();
        let w01 = w.weight(0, 1);
        assert!(w01 > 0.0);
        assert!((w.weight(0, 2) - w01).abs() < 1e-12);
        assert!((w.weight(1, 2) - w01).abs() < 1e-12);
    }

    #[test]
    fn knn_every_node_has_k_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Matrix::from_fn(8, 20, |_, _| rng.random_range(-1.0..1.0));
        let w = knn_similarity_graph(&x, 3).unwrap();
        for i in 0..8 {
            let nnz = w.weights().row(i).iter().filter(|&&v| v > 0.0).count();
            assert!(nnz >= 3);
            assert!(w.weights().row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(knn_similarity_graph(&x, 8).is_err());
    }
}
