//! Compressed sparse row matrices and a Jacobi-preconditioned BiCGStab solver.

use crate::error::{Error, Result};

/// Row-compressed sparse matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in entries {
            if i >= nrows || j >= ncols {
                return Err(Error::IndexOutOfRange {
                    row: i,
                    col: j,
                    rows: nrows,
                    cols: ncols,
                });
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }

        // Bucket by row, then sort and merge each row.
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(i, j, v) in entries {
            let k = next[i];
            cols[k] = j;
            vals[k] = v;
            next[i] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|&(j, _)| j);
            for &(j, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }

        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterator over the stored `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: y.len(),
            });
        }
        self.spmv(x, y);
        Ok(())
    }

    fn spmv(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.matvec(x)?;
        Ok(dot(x, &ax))
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            triplets.extend(self.row(i).map(|(j, v)| (j, i, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, &triplets).expect("indices in range")
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `sum_k c_k A_k` over matrices of equal shape; sparsity patterns may differ.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<Self> {
        let Some(&(_, first)) = terms.first() else {
            return Err(Error::TooFewPoints { needed: 1, found: 0 });
        };
        let (nrows, ncols) = (first.nrows, first.ncols);
        for (_, m) in terms {
            if m.nrows != nrows || m.ncols != ncols {
                return Err(Error::DimensionMismatch {
                    expected: nrows * ncols,
                    found: m.nrows * m.ncols,
                });
            }
        }

        // Fast path: identical patterns combine value-by-value.
        if terms
            .iter()
            .all(|(_, m)| m.indptr == first.indptr && m.indices == first.indices)
        {
            let mut values = vec![0.0; first.nnz()];
            for (c, m) in terms {
                for (acc, v) in values.iter_mut().zip(&m.values) {
                    *acc += c * v;
                }
            }
            return Ok(Self {
                nrows,
                ncols,
                indptr: first.indptr.clone(),
                indices: first.indices.clone(),
                values,
            });
        }

        let mut triplets = Vec::with_capacity(terms.iter().map(|(_, m)| m.nnz()).sum());
        for (c, m) in terms {
            for i in 0..nrows {
                triplets.extend(m.row(i).map(|(j, v)| (i, j, c * v)));
            }
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    /// Largest |a_ij - a_ji| over the stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest `|i - j|` over the stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residual `||b - A x|| / ||b||` at exit.
    pub residual: f64,
    pub converged: bool,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// Solves `A x = b` from a zero initial guess.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    solve_from(a, b, vec![0.0; b.len()], opts)
}

/// Right-preconditioned BiCGStab with a Jacobi preconditioner, started at `x`.
///
/// Convergence is only reported after the true residual has been recomputed.
/// A breakdown of the recurrence restarts once from the current iterate.
pub fn solve_from(
    a: &CsrMatrix,
    b: &[f64],
    mut x: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if b.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if b.len() != n { b.len() } else { x.len() },
        });
    }
    if !(opts.tol > 0.0) {
        return Err(crate::error::invalid("tol", "tolerance must be positive"));
    }

    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
                restarts: 0,
            },
        ));
    }
    let target = opts.tol * bnorm;

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |src: &[f64], dst: &mut [f64]| {
        for ((d, s), m) in dst.iter_mut().zip(src).zip(&inv_diag) {
            *d = s * m;
        }
    };

    let mut r = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64]| -> f64 {
        a.spmv(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r)
    };

    let mut rnorm = true_residual(&x, &mut r);
    let mut stats = SolveStats {
        iterations: 0,
        residual: rnorm / bnorm,
        converged: rnorm <= target,
        restarts: 0,
    };
    if stats.converged {
        return Ok((x, stats));
    }

    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);

    while stats.iterations < opts.max_iter {
        stats.iterations += 1;

        let rho_new = dot(&r_hat, &r);
        let breakdown = rho_new.abs() <= f64::EPSILON * norm2(&r_hat) * rnorm;
        let mut restart = breakdown;
        if !breakdown {
            let beta = (rho_new / rho) * (alpha / omega);
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
            precondition(&p, &mut y);
            a.spmv(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 || !denom.is_finite() {
                restart = true;
            } else {
                rho = rho_new;
                alpha = rho / denom;
                for k in 0..n {
                    x[k] += alpha * y[k];
                    s[k] = r[k] - alpha * v[k];
                }
                if norm2(&s) <= target {
                    rnorm = true_residual(&x, &mut r);
                    if rnorm <= target {
                        stats.residual = rnorm / bnorm;
                        stats.converged = true;
                        return Ok((x, stats));
                    }
                    restart = true;
                } else {
                    precondition(&s, &mut z);
                    a.spmv(&z, &mut t);
                    let tt = dot(&t, &t);
                    omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
                    for k in 0..n {
                        x[k] += omega * z[k];
                        r[k] = s[k] - omega * t[k];
                    }
                    rnorm = norm2(&r);
                    if rnorm <= target {
                        rnorm = true_residual(&x, &mut r);
                        if rnorm <= target {
                            stats.residual = rnorm / bnorm;
                            stats.converged = true;
                            return Ok((x, stats));
                        }
                        restart = true;
                    } else if omega == 0.0 || !omega.is_finite() {
                        restart = true;
                    }
                }
            }
        }

        if restart {
            // A restart triggered only by a stale residual estimate is a
            // normal refresh; genuine breakdowns get one retry.
            if breakdown || omega == 0.0 || !omega.is_finite() {
                if stats.restarts >= 1 {
                    break;
                }
                stats.restarts += 1;
            }
            rnorm = true_residual(&x, &mut r);
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
        }
    }

    rnorm = true_residual(&x, &mut r);
    stats.residual = rnorm / bnorm;
    stats.converged = rnorm <= target;
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, density: f64, diag_boost: f64) -> CsrMatrix {
        let mut trip = Vec::new();
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j && rng.gen_bool(density) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    row_sum += v.abs();
                    trip.push((i, j, v));
                }
            }
            trip.push((i, i, row_sum + diag_boost));
        }
        CsrMatrix::from_triplets(n, n, &trip).unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn csr_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trip: Vec<_> = (0..400)
            .map(|_| (rng.gen_range(0..15), rng.gen_range(0..9), rng.gen_range(-1.0..1.0)))
            .collect();
        let a = CsrMatrix::from_triplets(15, 9, &trip).unwrap();
        assert!(a.indptr().windows(2).all(|w| w[0] <= w[1]));
        for i in 0..a.nrows() {
            let cols: Vec<_> = a.row(i).map(|(j, _)| j).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let err = CsrMatrix::from_triplets(2, 2, &[(0, 2, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { .. }));
    }

    #[test]
    fn empty_matrix_is_zero() {
        let a = CsrMatrix::from_triplets(3, 3, &[]).unwrap();
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_matvec() {
        let trip: Vec<_> = (0..5).map(|i| (i, i, 1.0)).collect();
        let a = CsrMatrix::from_triplets(5, 5, &trip).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_eq!(a.matvec(&x).unwrap(), x);
        assert_eq!(a, CsrMatrix::identity(5));
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = CsrMatrix::identity(3);
        assert!(matches!(a.matvec(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matvec_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_sparse(&mut rng, 20, 0.2, 0.0);
        let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = a.to_dense();
        let y = a.matvec(&x).unwrap();
        for i in 0..20 {
            let expect: f64 = (0..20).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn solve_identity_is_immediate() {
        let a = CsrMatrix::identity(6);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0];
        let (x, stats) = solve(&a, &b, &SolverOptions::default()).unwrap();
        assert!(stats.converged);
        assert!(stats.iterations <= 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_zero_rhs() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let (x, stats) = solve(&a, &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn solve_two_by_two() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let (x, stats) = solve(&a, &[3.0, 4.0], &SolverOptions::default()).unwrap();
        assert!(stats.converged);
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn solve_matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_sparse(&mut rng, 50, 0.15, 0.5);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, stats) = solve(&a, &b, &SolverOptions::default()).unwrap();
        assert!(stats.converged);
        assert!(stats.residual <= 1e-10);

        let dense = DMatrix::from_fn(50, 50, |i, j| a.get(i, j));
        let oracle = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..50 {
            assert!((x[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_sparse(&mut rng, 40, 0.3, 0.1);
        let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let opts = SolverOptions { tol: 1e-14, max_iter: 2 };
        let (_, stats) = solve(&a, &b, &opts).unwrap();
        assert!(!stats.converged);
        assert!(stats.residual > 1e-14);
    }

    #[test]
    fn rejects_non_square() {
        let a = CsrMatrix::from_triplets(2, 3, &[]).unwrap();
        assert!(solve(&a, &[1.0, 1.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn linear_combination_merges_patterns() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 1, 3.0), (1, 1, 1.0)]).unwrap();
        let c = CsrMatrix::linear_combination(&[(2.0, &a), (-1.0, &b)]).unwrap();
        assert_eq!(c.to_dense(), vec![vec![2.0, -3.0], vec![0.0, 3.0]]);
    }

    proptest! {
        #[test]
        fn matvec_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_sparse(&mut rng, 12, 0.3, 0.0);
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = a.matvec(&combo).unwrap();
            let ax = a.matvec(&x).unwrap();
            let ay = a.matvec(&y).unwrap();
            for i in 0..12 {
                prop_assert!((lhs[i] - (alpha * ax[i] + beta * ay[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn solve_inverts_matvec(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_sparse(&mut rng, 25, 0.2, 1.0);
            let x: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.matvec(&x).unwrap();
            let (xs, stats) = solve(&a, &b, &SolverOptions::default()).unwrap();
            prop_assert!(stats.converged);
            for i in 0..25 {
                prop_assert!((xs[i] - x[i]).abs() < 1e-8);
            }
        }
    }
}
