//! Sparse matrices and the small set of solvers the scheme needs.
//!
//! CSR storage with deterministic duplicate summation, a banded Cholesky
//! factorization with optional reverse Cuthill-McKee reordering for the
//! mass and stiffness solves, Jacobi-preconditioned conjugate gradients for
//! meshes too large to factor, and a metric-aware power iteration used to
//! size the stable time step.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets. Duplicates are summed in
    /// insertion order, so assembly is bit-reproducible.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension(format!(
                    "triplet ({i},{j}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // Stable sort by (row, col) keeps duplicate contributions in
        // insertion order so their sum is deterministic.
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
            row_ptr[i + 1] = col_idx.len();
        }
        // Fill row pointers for rows without entries.
        for i in 1..=nrows {
            if row_ptr[i] < row_ptr[i - 1] {
                row_ptr[i] = row_ptr[i - 1];
            }
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
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

    /// Entries of row i as (col, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    /// y = A^T x.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * x[i];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.matvec_transpose(x, &mut y);
        y
    }

    /// Dense copy, for tests and small auxiliary blocks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows.min(self.ncols)];
        for i in 0..d.len() {
            for (j, v) in self.row(i) {
                if j == i {
                    d[i] += v;
                }
            }
        }
        d
    }
}

/// Direct solver for sparse symmetric positive definite systems: banded
/// Cholesky after an optional reverse Cuthill-McKee reordering.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    n: usize,
    bw: usize,
    /// Lower factor in band storage: L(i, j) at [i * (bw + 1) + bw - i + j].
    factor: Vec<f64>,
    /// perm[new] = old.
    perm: Vec<usize>,
}

impl SpdSolver {
    /// Factors the matrix. Fails with a factorization error if a pivot is
    /// not strictly positive (matrix not positive definite).
    pub fn new(a: &CsrMatrix, reorder: bool) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "SPD solve needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let perm: Vec<usize> = if reorder {
            reverse_cuthill_mckee(a)
        } else {
            (0..n).collect()
        };
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bw = 0usize;
        for i in 0..n {
            for (j, _) in a.row(i) {
                bw = bw.max(inv[i].abs_diff(inv[j]));
            }
        }
        let width = bw + 1;
        let mut band = vec![0.0f64; n * width];
        for i in 0..n {
            let pi = inv[i];
            for (j, v) in a.row(i) {
                let pj = inv[j];
                if pj <= pi {
                    band[pi * width + bw - pi + pj] += v;
                }
            }
        }
        // In-place band Cholesky.
        for i in 0..n {
            let jlo = i.saturating_sub(bw);
            for j in jlo..=i {
                let klo = jlo.max(j.saturating_sub(bw));
                let mut s = band[i * width + bw - i + j];
                for k in klo..j {
                    s -= band[i * width + bw - i + k] * band[j * width + bw - j + k];
                }
                if j < i {
                    band[i * width + bw - i + j] = s / band[j * width + bw];
                } else {
                    if s <= 0.0 {
                        return Err(Error::Factorization(format!(
                            "nonpositive pivot {s:.3e} at row {i} of {n}"
                        )));
                    }
                    band[i * width + bw] = s.sqrt();
                }
            }
        }
        Ok(SpdSolver {
            n,
            bw,
            factor: band,
            perm,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, bw) = (self.n, self.bw);
        let width = bw + 1;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[self.perm[i]];
            let jlo = i.saturating_sub(bw);
            for j in jlo..i {
                s -= self.factor[i * width + bw - i + j] * y[j];
            }
            y[i] = s / self.factor[i * width + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            let jhi = (i + bw).min(n - 1);
            for j in i + 1..=jhi {
                s -= self.factor[j * width + bw - j + i] * y[j];
            }
            y[i] = s / self.factor[i * width + bw];
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

/// Reverse Cuthill-McKee ordering; returns perm with perm[new] = old.
fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree = |i: usize| a.row(i).filter(|&(j, _)| j != i).count();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // Lowest-degree unvisited node starts the next component.
        let start = match (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree(i), i))
        {
            Some(s) => s,
            None => break,
        };
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a
                .row(u)
                .map(|(j, _)| j)
                .filter(|&j| j != u && !visited[j])
                .collect();
            nbrs.sort_by_key(|&j| (degree(j), j));
            nbrs.dedup();
            for j in nbrs {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Jacobi-preconditioned conjugate gradients. Returns the solution and the
/// iteration count; fails if the residual does not drop below
/// rtol * ||b|| within max_iter iterations.
pub fn solve_cg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    rtol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let diag = a.diagonal();
    let minv: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let norm_b = norm2(b);
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if norm2(&r) <= rtol * norm_b {
            return Ok((x, it));
        }
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm2(&r) <= rtol * norm_b {
        return Ok((x, max_iter));
    }
    Err(Error::NonConvergence(format!(
        "conjugate gradients stalled at relative residual {:.3e} after {max_iter} iterations",
        norm2(&r) / norm_b
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest eigenvalue of an operator that is self-adjoint with respect to
/// the inner product `metric_dot`, by power iteration with Rayleigh
/// quotient estimates. `apply` must map x to A x.
pub fn power_iteration<A, M>(
    n: usize,
    mut apply: A,
    metric_dot: M,
    rtol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<f64>
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: Fn(&[f64], &[f64]) -> f64,
{
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = metric_dot(&v, &v).sqrt();
    for x in &mut v {
        *x /= nv;
    }
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let av = apply(&v);
        let next = metric_dot(&v, &av);
        let nav = metric_dot(&av, &av).sqrt();
        if nav == 0.0 {
            return Ok(0.0);
        }
        v = av.iter().map(|&x| x / nav).collect();
        if (next - lambda).abs() <= rtol * next.abs().max(1e-300) {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::NonConvergence(format!(
        "power iteration did not settle within {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n) * n as f64;
        let mut trips = Vec::new();
        for i in 0..n {
            for j in 0..n {
                trips.push((i, j, a[(i, j)]));
            }
        }
        CsrMatrix::from_triplets(n, n, &trips).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5), (0, 1, -1.0)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 3);
        let d = a.to_dense();
        assert_eq!(d[(0, 0)], 1.5);
        assert_eq!(d[(0, 1)], -1.0);
        assert_eq!(d[(1, 1)], 2.0);
        assert_eq!(d[(1, 0)], 0.0);
    }

    #[test]
    fn triplets_reject_out_of_range() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let a = random_spd(7, 1);
        let d = a.to_dense();
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin() + 0.3).collect();
        let y = a.apply(&x);
        let yd = &d * nalgebra::DVector::from_column_slice(&x);
        for i in 0..7 {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
        let yt = a.apply_transpose(&x);
        let ytd = d.transpose() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..7 {
            assert!((yt[i] - ytd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        for reorder in [false, true] {
            let a = random_spd(12, 3);
            let solver = SpdSolver::new(&a, reorder).unwrap();
            let x_true: Vec<f64> = (0..12).map(|i| 1.0 + i as f64 * 0.1).collect();
            let b = a.apply(&x_true);
            let x = solver.solve(&b);
            for i in 0..12 {
                assert!((x[i] - x_true[i]).abs() < 1e-10, "entry {i}");
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)])
            .unwrap();
        match SpdSolver::new(&a, false) {
            Err(Error::Factorization(_)) => {}
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn rcm_recovers_chain_bandwidth() {
        // A path graph numbered badly has a huge bandwidth; reordering
        // brings it back to 1.
        let n = 40;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut label: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            label.swap(i, j);
        }
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((label[i], label[i], 4.0));
            if i + 1 < n {
                trips.push((label[i], label[i + 1], -1.0));
                trips.push((label[i + 1], label[i], -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &trips).unwrap();
        let plain = SpdSolver::new(&a, false).unwrap();
        let rcm = SpdSolver::new(&a, true).unwrap();
        assert_eq!(rcm.bandwidth(), 1);
        assert!(plain.bandwidth() > 1);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let x1 = plain.solve(&b);
        let x2 = rcm.solve(&b);
        for i in 0..n {
            assert!((x1[i] - x2[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn cg_matches_direct_solve() {
        let a = random_spd(30, 5);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let direct = SpdSolver::new(&a, false).unwrap().solve(&b);
        let (x, iters) = solve_cg(&a, &b, None, 1e-12, 500).unwrap();
        assert!(iters > 0);
        for i in 0..30 {
            assert!((x[i] - direct[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_reports_nonconvergence() {
        let a = random_spd(30, 6);
        let b = vec![1.0; 30];
        match solve_cg(&a, &b, None, 1e-14, 2) {
            Err(Error::NonConvergence(_)) => {}
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    #[test]
    fn power_iteration_scalar_case() {
        // One unknown each: mass 4 on both sides, coupling 2. The operator
        // norm is sqrt(2 * (1/4) * 2 * (1/4)) = 0.5.
        let norm = power_iteration(
            1,
            |x| vec![2.0 * (1.0 / 4.0) * 2.0 * x[0] / 4.0],
            |a, b| 4.0 * a[0] * b[0],
            1e-12,
            100,
            42,
        )
        .unwrap()
        .sqrt();
        assert!((norm - 0.5).abs() < 1e-10);
    }

    #[test]
    fn power_iteration_matches_eigen_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d = DMatrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0));
        let m0: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..2.0)).collect();
        let m1: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..2.0)).collect();
        // Oracle: eigenvalues of M1^{-1/2} D M0^{-1} D^T M1^{-1/2}.
        let m0i = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            6,
            m0.iter().map(|&x| 1.0 / x),
        ));
        let m1h = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            m1.iter().map(|&x| 1.0 / x.sqrt()),
        ));
        let sym = &m1h * &d * &m0i * d.transpose() * &m1h;
        let expect = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        let got = power_iteration(
            4,
            |x| {
                let xv = nalgebra::DVector::from_column_slice(x);
                let y = &d * &m0i * d.transpose() * xv;
                (0..4).map(|i| y[i] / m1[i]).collect()
            },
            |a, b| (0..4).map(|i| m1[i] * a[i] * b[i]).sum(),
            1e-10,
            10000,
            7,
        )
        .unwrap();
        assert!((got - expect).abs() < 1e-6 * expect);
    }
}
