//! Sparse symmetric linear algebra: CSC storage, matrix-vector products,
//! Cholesky / LDL^T factorizations and a preconditioned MINRES solver.

mod factor;
mod minres;

pub use factor::{factorize_quasidef, factorize_spd, FactorKind, Factorization};
pub use minres::{minres, minres_with_true_target, MinresStats};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("LDL^T factorization breakdown: zero pivot at index {0}")]
    FactorizationBreakdown(usize),
    #[error("MINRES preconditioner breakdown: nonpositive P^-1 inner product")]
    PreconditionerBreakdown,
}

/// Sparse matrix in compressed sparse column form.
///
/// Symmetric matrices are stored with both triangles so that `mul_vec`
/// needs no special casing; the factorization routines extract the upper
/// triangle themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            count[c + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let colptr = count.clone();
        let mut rowind = vec![0usize; triplets.len()];
        let mut values = vec![0.0; triplets.len()];
        let mut next = colptr.clone();
        for &(r, c, v) in triplets {
            let p = next[c];
            rowind[p] = r;
            values[p] = v;
            next[c] += 1;
        }
        let mut m = CscMatrix {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        };
        m.sort_and_combine();
        m
    }

    /// Assembles from raw CSC arrays; columns must be sorted with no duplicates.
    pub fn from_csc(
        nrows: usize,
        ncols: usize,
        colptr: Vec<usize>,
        rowind: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(colptr.len(), ncols + 1);
        assert_eq!(rowind.len(), values.len());
        assert_eq!(*colptr.last().unwrap(), rowind.len());
        CscMatrix {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowind: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowind: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowind: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowind(&self) -> &[usize] {
        &self.rowind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates over stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.colptr[j]..self.colptr[j + 1]).map(move |p| (self.rowind[p], j, self.values[p]))
        })
    }

    fn sort_and_combine(&mut self) {
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut rowind = Vec::with_capacity(self.rowind.len());
        let mut values = Vec::with_capacity(self.values.len());
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for j in 0..self.ncols {
            buf.clear();
            for p in self.colptr[j]..self.colptr[j + 1] {
                buf.push((self.rowind[p], self.values[p]));
            }
            buf.sort_unstable_by_key(|&(r, _)| r);
            let mut i = 0;
            while i < buf.len() {
                let r = buf[i].0;
                let mut v = buf[i].1;
                let mut k = i + 1;
                while k < buf.len() && buf[k].0 == r {
                    v += buf[k].1;
                    k += 1;
                }
                rowind.push(r);
                values.push(v);
                i = k;
            }
            colptr[j + 1] = rowind.len();
        }
        self.colptr = colptr;
        self.rowind = rowind;
        self.values = values;
    }

    /// y = A x
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "spmv dimension mismatch");
        assert_eq!(y.len(), self.nrows, "spmv dimension mismatch");
        y.fill(0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowind[p]] += self.values[p] * xj;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// y = A^T x
    pub fn tr_mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows, "spmv^T dimension mismatch");
        assert_eq!(y.len(), self.ncols, "spmv^T dimension mismatch");
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.values[p] * x[self.rowind[p]];
            }
            y[j] = acc;
        }
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.tr_mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.rowind {
            count[r + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let colptr = count.clone();
        let mut rowind = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = colptr.clone();
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let r = self.rowind[p];
                let q = next[r];
                rowind[q] = j;
                values[q] = self.values[p];
                next[r] += 1;
            }
        }
        CscMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            colptr,
            rowind,
            values,
        }
    }

    /// Exact structural + value symmetry check (zero tolerance).
    pub fn is_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        self.colptr == t.colptr && self.rowind == t.rowind && self.values == t.values
    }

    pub fn has_finite_values(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Diagonal of a square matrix as a dense vector (missing entries are 0).
    pub fn diagonal(&self) -> Vec<f64> {
        assert_eq!(self.nrows, self.ncols);
        let mut d = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                if self.rowind[p] == j {
                    d[j] = self.values[p];
                }
            }
        }
        d
    }

    /// Upper triangle (including diagonal) of a square matrix, inserting an
    /// explicit zero diagonal entry where one is structurally missing. This is
    /// the input form used by the factorization routines.
    pub fn upper_triangle_with_diag(&self) -> CscMatrix {
        assert_eq!(self.nrows, self.ncols);
        let n = self.ncols;
        let mut triplets = Vec::with_capacity(self.nnz() / 2 + n);
        for j in 0..n {
            let mut has_diag = false;
            for p in self.colptr[j]..self.colptr[j + 1] {
                let r = self.rowind[p];
                if r < j {
                    triplets.push((r, j, self.values[p]));
                } else if r == j {
                    has_diag = true;
                    triplets.push((r, j, self.values[p]));
                }
            }
            if !has_diag {
                triplets.push((j, j, 0.0));
            }
        }
        CscMatrix::from_triplets(n, n, &triplets)
    }

    /// C = A * B with a dense accumulator per result column.
    pub fn matmul(&self, other: &CscMatrix) -> CscMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let m = self.nrows;
        let n = other.ncols;
        let mut colptr = vec![0usize; n + 1];
        let mut rowind = Vec::new();
        let mut values = Vec::new();
        let mut marker = vec![usize::MAX; m];
        let mut accum = vec![0.0; m];
        let mut rows_here: Vec<usize> = Vec::new();
        for j in 0..n {
            rows_here.clear();
            for pb in other.colptr[j]..other.colptr[j + 1] {
                let k = other.rowind[pb];
                let bv = other.values[pb];
                for pa in self.colptr[k]..self.colptr[k + 1] {
                    let r = self.rowind[pa];
                    if marker[r] != j {
                        marker[r] = j;
                        accum[r] = 0.0;
                        rows_here.push(r);
                    }
                    accum[r] += self.values[pa] * bv;
                }
            }
            rows_here.sort_unstable();
            for &r in &rows_here {
                rowind.push(r);
                values.push(accum[r]);
            }
            colptr[j + 1] = rowind.len();
        }
        CscMatrix {
            nrows: m,
            ncols: n,
            colptr,
            rowind,
            values,
        }
    }

    /// A * Diag(w) * A^T + shift * I, for a nonnegative weight vector `w`
    /// (zero weights drop the corresponding columns). This is the sparse
    /// normal-equations product behind the preconditioner Schur block.
    pub fn weighted_aat_plus_diag(&self, w: &[f64], shift: f64) -> CscMatrix {
        assert_eq!(w.len(), self.ncols);
        // Scale columns of A by w, drop zeros, multiply against A^T.
        let mut triplets = Vec::new();
        for j in 0..self.ncols {
            if w[j] == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                triplets.push((self.rowind[p], j, self.values[p] * w[j]));
            }
        }
        let scaled = CscMatrix::from_triplets(self.nrows, self.ncols, &triplets);
        let at = self.transpose();
        let mut prod = scaled.matmul(&at);
        // add shift on the diagonal
        let mut extra = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            extra.push((i, i, shift));
        }
        let mut all: Vec<(usize, usize, f64)> = prod.iter().collect();
        all.append(&mut extra);
        prod = CscMatrix::from_triplets(self.nrows, self.nrows, &all);
        prod
    }

    /// Dense copy, for diagnostics and small-instance oracles.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            d[(r, c)] += v;
        }
        d
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rough largest singular value by power iteration on A'A.
pub fn op_norm_est(a: &CscMatrix, iters: usize) -> f64 {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 || a.nnz() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let scale = norm2(&v);
    for x in &mut v {
        *x /= scale;
    }
    let mut av = vec![0.0; m];
    let mut lambda = 0.0;
    for _ in 0..iters {
        a.mul_vec_into(&v, &mut av);
        a.tr_mul_vec_into(&av, &mut v);
        // v was unit, so ||A'A v|| estimates lambda_max(A'A)
        lambda = norm2(&v);
        if lambda == 0.0 {
            return 0.0;
        }
        for x in &mut v {
            *x /= lambda;
        }
    }
    lambda.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
