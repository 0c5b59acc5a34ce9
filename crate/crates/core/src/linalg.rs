//! Dense linear algebra for small symmetric problems.
//!
//! Everything here works on row-major `f64` storage. The routines are sized
//! for p up to a few hundred: Cholesky, cyclic Jacobi eigenvalues, power
//! iteration for the spectral norm and the four matrix norms used to score
//! precision estimates.

use std::fmt;
use std::ops::{Deref, Index};

use thiserror::Error;

/// Relative pivot threshold below which a Cholesky pivot is declared non-positive.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Iteration cap for [`norm_operator`].
pub const POWER_ITERATION_CAP: usize = 10_000;
/// Default relative tolerance for [`norm_operator`].
pub const POWER_ITERATION_TOL: f64 = 1e-9;
/// Sweep cap for [`sym_eigenvalues`].
pub const JACOBI_SWEEP_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("{routine} did not converge after {iterations} iterations (last estimate {last})")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
        last: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric: entry ({i},{j}) differs from ({j},{i})")]
    NotSymmetric { i: usize, j: usize },
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(LinalgError::Dimension(format!(
                    "row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `out = self * x` without allocating.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.cols, x.len());
        debug_assert_eq!(self.rows, out.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Square matrix whose entries satisfy `a[i][j] == a[j][i]` exactly.
#[derive(Clone, PartialEq)]
pub struct SymmetricMatrix(Matrix);

impl SymmetricMatrix {
    pub fn zeros(p: usize) -> Self {
        Self(Matrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        Self(Matrix::identity(p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let p = diag.len();
        Self(Matrix::from_fn(p, p, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    /// Builds the matrix from `f(i, j)` evaluated on the upper triangle `i <= j`.
    pub fn from_upper(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = f(i, j);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Self(m)
    }

    /// Accepts `m` only if it is square and exactly symmetric.
    pub fn try_from_matrix(m: Matrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.rows, m.cols
            )));
        }
        for i in 0..m.rows {
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(LinalgError::NotSymmetric { i, j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Symmetrizes by averaging mirrored entries.
    pub fn from_matrix_averaged(m: &Matrix) -> Self {
        assert!(m.is_square(), "symmetrization needs a square matrix");
        Self::from_upper(m.rows, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        Self::try_from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> SymmetricMatrix {
        Self(self.0.scaled(factor))
    }

    pub fn add(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        Self(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        Self(self.0.sub(&other.0))
    }

    pub fn add_to_diagonal(&self, shift: f64) -> SymmetricMatrix {
        let mut m = self.0.clone();
        for i in 0..m.rows {
            let v = m.get(i, i);
            m.set(i, i, v + shift);
        }
        Self(m)
    }

    /// Congruence `P A P^T` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SymmetricMatrix {
        let p = self.dim();
        assert_eq!(perm.len(), p);
        let mut m = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                m.set(perm[i], perm[j], self.0.get(i, j));
            }
        }
        Self(m)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0.get(i, i)).sum()
    }

    /// Trace inner product `<A, B> = tr(A B)`.
    pub fn trace_inner(&self, other: &SymmetricMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl Deref for SymmetricMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Symmetric{:?}", self.0)
    }
}

/// Lower-triangular Cholesky factor with a strictly positive diagonal.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    lower: Matrix,
    /// First structurally nonzero column of each row; lets banded factors
    /// multiply in O(bandwidth).
    row_start: Vec<usize>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        let p = self.dim();
        SymmetricMatrix::from_upper(p, |i, j| {
            let start = self.row_start[i].max(self.row_start[j]);
            (start..=i.min(j))
                .map(|k| self.lower.get(i, k) * self.lower.get(j, k))
                .sum()
        })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| self.lower.get(i, i).ln())
            .sum::<f64>()
    }

    /// `out = L z`.
    pub fn lower_mul(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let start = self.row_start[i];
            *o = dot(&self.lower.row(i)[start..=i], &z[start..=i]);
        }
    }

    /// Solves `A x = b` for the factored `A = L L^T`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..p {
            let start = self.row_start[i];
            let s = dot(&l.row(i)[start..i], &y[start..i]);
            y[i] = (y[i] - s) / l.get(i, i);
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in i + 1..p {
                s -= l.get(k, i) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        y
    }

    pub fn inverse(&self) -> SymmetricMatrix {
        let p = self.dim();
        let mut inv = Matrix::zeros(p, p);
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        SymmetricMatrix::from_matrix_averaged(&inv)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Largest absolute entry.
pub fn norm_elementwise_inf(a: &Matrix) -> f64 {
    a.as_slice().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Maximum absolute column sum.
pub fn norm_matrix_l1(a: &Matrix) -> f64 {
    let mut sums = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for (s, v) in sums.iter_mut().zip(a.row(i)) {
            *s += v.abs();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

pub fn norm_frobenius(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum of absolute entries (the elementwise l1 norm used as the sparsity penalty).
pub fn norm_elementwise_l1(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|v| v.abs()).sum()
}

/// Largest singular value via power iteration on `A^T A`.
///
/// Stops once the Rayleigh quotient of `A^T A` changes by less than `tol`
/// relative to its magnitude. When progress stalls (nearly tied dominant
/// singular values) the iteration matrix is squared, so later steps act as
/// power iteration on `(A^T A)^(2^s)`. On hitting [`POWER_ITERATION_CAP`]
/// the error carries the last estimate of the norm.
pub fn norm_operator(a: &Matrix, tol: f64) -> Result<f64, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!(
            "operator norm expects a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let p = a.cols();
    if p == 0 || norm_elementwise_inf(a) == 0.0 {
        return Ok(0.0);
    }
    let gram = a.transpose().matmul(a);
    let mut iteration = gram.clone();
    // A fixed, non-symmetric start vector avoids being orthogonal to the
    // dominant direction for the structured matrices used in tests.
    let mut v: Vec<f64> = (0..p).map(|i| 1.0 + (i as f64 + 1.0) / (p as f64 + 1.0)).collect();
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    let mut w = vec![0.0; p];
    let mut estimate = 0.0f64;
    for step in 1..=POWER_ITERATION_CAP {
        iteration.matvec_into(&v, &mut w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        gram.matvec_into(&v, &mut w);
        let next = dot(&v, &w);
        if (next - estimate).abs() <= tol * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        estimate = next;
        if step % 50 == 0 {
            let squared = iteration.matmul(&iteration);
            let scale = norm_frobenius(&squared);
            if scale > 0.0 && scale.is_finite() {
                iteration = squared.scaled(1.0 / scale);
            }
        }
    }
    Err(LinalgError::NoConvergence {
        routine: "norm_operator",
        iterations: POWER_ITERATION_CAP,
        last: estimate.max(0.0).sqrt(),
    })
}

/// Cholesky factorization `A = L L^T`.
///
/// A pivot at or below `1e-12 * max(diag(A))` reports
/// [`LinalgError::NotPositiveDefinite`].
pub fn cholesky(a: &SymmetricMatrix) -> Result<CholeskyFactor, LinalgError> {
    let p = a.dim();
    let max_diag = (0..p).map(|i| a.get(i, i)).fold(f64::NEG_INFINITY, f64::max);
    if p == 0 || max_diag <= 0.0 || !max_diag.is_finite() {
        return Err(LinalgError::NotPositiveDefinite {
            index: 0,
            pivot: if p == 0 { 0.0 } else { a.get(0, 0) },
        });
    }
    let threshold = PIVOT_TOLERANCE * max_diag;
    let mut l = Matrix::zeros(p, p);
    let mut row_start = vec![0usize; p];
    for i in 0..p {
        row_start[i] = (0..i).find(|&k| a.get(i, k) != 0.0).unwrap_or(i);
    }
    for j in 0..p {
        let start = row_start[j];
        let s = dot(&l.row(j)[start..j], &l.row(j)[start..j]);
        let pivot = a.get(j, j) - s;
        if pivot <= threshold || !pivot.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        l.set(j, j, d);
        for i in j + 1..p {
            let start = row_start[i].max(row_start[j]);
            if start > j {
                continue;
            }
            let s = a.get(i, j) - dot(&l.row(i)[start..j], &l.row(j)[start..j]);
            l.set(i, j, s / d);
        }
    }
    Ok(CholeskyFactor {
        lower: l,
        row_start,
    })
}

pub fn log_det_spd(a: &SymmetricMatrix) -> Result<f64, LinalgError> {
    Ok(cholesky(a)?.log_det())
}

pub fn invert_spd(a: &SymmetricMatrix) -> Result<SymmetricMatrix, LinalgError> {
    Ok(cholesky(a)?.inverse())
}

/// All eigenvalues of a symmetric matrix in descending order (cyclic Jacobi).
///
/// Sweeps until the off-diagonal Frobenius mass drops below `tol * ||A||_F`.
pub fn sym_eigenvalues(a: &SymmetricMatrix, tol: f64) -> Result<Vec<f64>, LinalgError> {
    let p = a.dim();
    let mut m = a.as_matrix().clone();
    let scale = norm_frobenius(&m);
    if scale == 0.0 {
        return Ok(vec![0.0; p]);
    }
    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s.sqrt()
    };
    let target = tol * scale;
    let mut sweeps = 0;
    let mut residual = off(&m);
    while residual >= target {
        if sweeps == JACOBI_SWEEP_CAP {
            return Err(LinalgError::NoConvergence {
                routine: "sym_eigenvalues",
                iterations: sweeps,
                last: residual,
            });
        }
        for k in 0..p {
            for l in k + 1..p {
                let akl = m.get(k, l);
                if akl == 0.0 {
                    continue;
                }
                let akk = m.get(k, k);
                let all = m.get(l, l);
                let theta = (all - akk) / (2.0 * akl);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..p {
                    let aik = m.get(i, k);
                    let ail = m.get(i, l);
                    m.set(i, k, c * aik - s * ail);
                    m.set(i, l, s * aik + c * ail);
                }
                for i in 0..p {
                    let aki = m.get(k, i);
                    let ali = m.get(l, i);
                    m.set(k, i, c * aki - s * ali);
                    m.set(l, i, s * aki + c * ali);
                }
                m.set(k, l, 0.0);
                m.set(l, k, 0.0);
            }
        }
        sweeps += 1;
        residual = off(&m);
    }
    let mut eig = m.diagonal();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Condition number `max|eig| / min|eig|` of a symmetric matrix.
pub fn condition_number(a: &SymmetricMatrix, tol: f64) -> Result<f64, LinalgError> {
    let eig = sym_eigenvalues(a, tol)?;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Ok(max / min)
}

/// `sign(x) * max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
