//! Least-squares building blocks shared by all adjustments.
//!
//! Every estimator in the workspace reduces to the same two steps:
//! accumulate normal equations `N·δ = u` from (possibly condition-reduced)
//! rows, then solve. Free-network problems have a rank-deficient `N`; the
//! solver below takes the minimum-norm solution through a symmetric
//! eigendecomposition, reports the numerically detected defect, and exposes
//! the null-space basis so callers can verify *which* directions were
//! unobservable rather than trusting a hard-coded count.

use nalgebra::{DMatrix, DVector};

/// Mergeable accumulator for weighted normal equations.
///
/// `add_*` methods fold one measurement or condition row at a time;
/// [`NormalAccumulator::merge`] combines partial sums, which keeps chunked
/// parallel accumulation bit-identical to a sequential pass as long as the
/// chunk boundaries and merge order are fixed.
#[derive(Debug, Clone)]
pub struct NormalAccumulator {
    /// Coefficient matrix of the normal equations (symmetric).
    pub n: DMatrix<f64>,
    /// Right-hand side.
    pub u: DVector<f64>,
    /// Accumulated weighted square sum of the reduced misclosures
    /// (`Σ w·l²`), used for a-posteriori variance factors.
    pub weighted_square_sum: f64,
    /// Number of accumulated scalar rows/conditions.
    pub rows: usize,
}

impl NormalAccumulator {
    /// Empty accumulator for `dim` unknowns.
    pub fn new(dim: usize) -> Self {
        Self {
            n: DMatrix::zeros(dim, dim),
            u: DVector::zeros(dim),
            weighted_square_sum: 0.0,
            rows: 0,
        }
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.n.nrows()
    }

    /// Adds one dense scalar row of the measurement equation `a·δ = l + v`
    /// with weight `w`: `N += w·aᵀa`, `u += w·aᵀl`.
    ///
    /// Condition-equation callers (`a·δ + misclosure = −v_equiv`) pass
    /// `l = −misclosure`; the normal-equation algebra is identical.
    pub fn add_row(&mut self, a: &[f64], w: f64, l: f64) {
        debug_assert_eq!(a.len(), self.dim());
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let wai = w * ai;
            for (j, &aj) in a.iter().enumerate().skip(i) {
                if aj != 0.0 {
                    self.n[(i, j)] += wai * aj;
                }
            }
            self.u[i] += wai * l;
        }
        self.weighted_square_sum += w * l * l;
        self.rows += 1;
    }

    /// Adds one sparse scalar row given parallel slices of column indices
    /// and coefficients. Preferred in network adjustments where each row
    /// touches a handful of the hundreds of unknowns.
    pub fn add_sparse_row(&mut self, cols: &[usize], vals: &[f64], w: f64, l: f64) {
        debug_assert_eq!(cols.len(), vals.len());
        for (k, (&i, &ai)) in cols.iter().zip(vals).enumerate() {
            let wai = w * ai;
            for (&j, &aj) in cols.iter().zip(vals).skip(k) {
                // Keep the upper triangle; symmetrize at solve time.
                if i <= j {
                    self.n[(i, j)] += wai * aj;
                } else {
                    self.n[(j, i)] += wai * aj;
                }
            }
            self.u[i] += wai * l;
        }
        self.weighted_square_sum += w * l * l;
        self.rows += 1;
    }

    /// Folds another accumulator into this one (commutative in exact
    /// arithmetic; merge order is fixed by callers for bit determinism).
    pub fn merge(&mut self, other: &NormalAccumulator) {
        self.n += &other.n;
        self.u += &other.u;
        self.weighted_square_sum += other.weighted_square_sum;
        self.rows += other.rows;
    }

    /// Finished symmetric normal matrix (mirrors the stored upper triangle).
    pub fn symmetric_n(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut n = self.n.clone();
        for i in 0..dim {
            for j in 0..i {
                n[(i, j)] = n[(j, i)];
            }
        }
        n
    }
}

/// Result of a minimum-norm normal-equation solve.
#[derive(Debug, Clone)]
pub struct MinNormSolution {
    /// Minimum-norm parameter update δ.
    pub delta: DVector<f64>,
    /// Pseudo-inverse of the normal matrix: cofactor matrix of the
    /// estimated parameters under the minimum-norm datum.
    pub cov: DMatrix<f64>,
    /// Numerical rank of the normal matrix.
    pub rank: usize,
    /// Rank defect (dimension − rank): size of the datum deficiency
    /// actually present in the data, not an assumed constant.
    pub defect: usize,
    /// Orthonormal basis of the null space, one column per defect.
    pub null_basis: DMatrix<f64>,
    /// Eigenvalues of the normal matrix, descending.
    pub eigenvalues: DVector<f64>,
}

/// Solves `N·δ = u` by eigendecomposition, zeroing eigenvalues below
/// `rel_tol × λ_max`. The returned δ has no component in the null space,
/// which realizes the inner-constraint (free-network) datum: the update is
/// the smallest one consistent with the measurements.
pub fn solve_min_norm(n: &DMatrix<f64>, u: &DVector<f64>, rel_tol: f64) -> MinNormSolution {
    let dim = n.nrows();
    assert_eq!(n.ncols(), dim, "normal matrix must be square");
    assert_eq!(u.len(), dim, "rhs length must match");
    let eig = nalgebra::linalg::SymmetricEigen::new(n.clone());

    // Sort eigenpairs descending by eigenvalue.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let lambda_max = order
        .first()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .unwrap_or(0.0);
    let threshold = rel_tol * lambda_max;

    let mut cov = DMatrix::zeros(dim, dim);
    let mut delta = DVector::zeros(dim);
    let mut rank = 0usize;
    let mut null_cols = Vec::new();
    let mut eigenvalues = DVector::zeros(dim);
    for (slot, &i) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        eigenvalues[slot] = lambda;
        let v = eig.eigenvectors.column(i);
        if lambda > threshold {
            rank += 1;
            let scale = v.dot(u) / lambda;
            delta.axpy(scale, &v, 1.0);
            // cov += v vᵀ / λ
            for r in 0..dim {
                let vr = v[r] / lambda;
                if vr == 0.0 {
                    continue;
                }
                for c in 0..dim {
                    cov[(r, c)] += vr * v[c];
                }
            }
        } else {
            null_cols.push(i);
        }
    }

    let mut null_basis = DMatrix::zeros(dim, null_cols.len());
    for (k, &i) in null_cols.iter().enumerate() {
        null_basis.set_column(k, &eig.eigenvectors.column(i));
    }

    MinNormSolution {
        delta,
        cov,
        rank,
        defect: dim - rank,
        null_basis,
        eigenvalues,
    }
}

/// Redundancy contribution of one scalar row with sparse coefficients:
/// `r_i = 1 − w · aᵀ · cov · a`. Sums of these per observation group feed
/// variance-component estimation; the total over all rows equals the
/// global redundancy `rows − rank`.
pub fn row_redundancy(cols: &[usize], vals: &[f64], w: f64, cov: &DMatrix<f64>) -> f64 {
    let mut quad = 0.0;
    for (&i, &ai) in cols.iter().zip(vals) {
        for (&j, &aj) in cols.iter().zip(vals) {
            quad += ai * cov[(i, j)] * aj;
        }
    }
    1.0 - w * quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn full_rank_solve_matches_direct_inverse() {
        // Overdetermined 1D line fit: y = a + b x at x = 0,1,2 with y = 1,3,5.
        let mut acc = NormalAccumulator::new(2);
        for (x, y) in [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)] {
            acc.add_row(&[1.0, x], 1.0, y);
        }
        let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, 1e-12);
        assert_eq!(sol.defect, 0);
        assert_relative_eq!(sol.delta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.delta[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sparse_and_dense_rows_agree() {
        let mut dense = NormalAccumulator::new(4);
        let mut sparse = NormalAccumulator::new(4);
        dense.add_row(&[0.0, 2.0, 0.0, -1.5], 3.0, 0.7);
        sparse.add_sparse_row(&[1, 3], &[2.0, -1.5], 3.0, 0.7);
        assert_relative_eq!(dense.symmetric_n(), sparse.symmetric_n(), epsilon = 1e-15);
        assert_relative_eq!(dense.u, sparse.u, epsilon = 1e-15);
    }

    #[test]
    fn rank_deficient_system_yields_min_norm_update() {
        // Only the sum x0 + x1 is observed: defect 1, null space (1,-1)/√2.
        let mut acc = NormalAccumulator::new(2);
        acc.add_row(&[1.0, 1.0], 1.0, 4.0);
        acc.add_row(&[1.0, 1.0], 1.0, 4.0);
        let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, 1e-10);
        assert_eq!(sol.rank, 1);
        assert_eq!(sol.defect, 1);
        // Minimum-norm answer splits the sum evenly.
        assert_relative_eq!(sol.delta[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.delta[1], 2.0, epsilon = 1e-12);
        let null = sol.null_basis.column(0);
        assert_relative_eq!(null[0] + null[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(null.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn merge_is_identical_to_single_pass() {
        let rows: Vec<([f64; 3], f64, f64)> = (0..30)
            .map(|i| {
                let x = i as f64 * 0.1;
                ([1.0, x, x * x], 1.0 + 0.01 * x, 2.0 - x)
            })
            .collect();
        let mut single = NormalAccumulator::new(3);
        for (a, w, l) in &rows {
            single.add_row(a, *w, *l);
        }
        let mut left = NormalAccumulator::new(3);
        let mut right = NormalAccumulator::new(3);
        for (a, w, l) in &rows[..13] {
            left.add_row(a, *w, *l);
        }
        for (a, w, l) in &rows[13..] {
            right.add_row(a, *w, *l);
        }
        left.merge(&right);
        assert_eq!(left.rows, single.rows);
        // Chunked accumulation reassociates floating-point sums, so compare
        // tightly rather than bitwise; bit-identity is only promised between
        // the sequential and parallel paths that share one chunking.
        assert_relative_eq!(left.symmetric_n(), single.symmetric_n(), epsilon = 1e-12);
        assert_relative_eq!(left.u, single.u, epsilon = 1e-12);
    }

    #[test]
    fn redundancies_sum_to_degrees_of_freedom() {
        let rows: Vec<([f64; 2], f64, f64)> = vec![
            ([1.0, 0.0], 1.0, 1.0),
            ([1.0, 1.0], 2.0, 2.0),
            ([0.0, 1.0], 0.5, 3.0),
            ([1.0, 2.0], 1.0, 4.0),
        ];
        let mut acc = NormalAccumulator::new(2);
        for (a, w, l) in &rows {
            acc.add_row(a, *w, *l);
        }
        let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, 1e-12);
        let total: f64 = rows
            .iter()
            .map(|(a, w, _)| row_redundancy(&[0, 1], a, *w, &sol.cov))
            .sum();
        assert_relative_eq!(total, (rows.len() - sol.rank) as f64, epsilon = 1e-10);
    }
}
