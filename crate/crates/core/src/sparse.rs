//! Compressed sparse row storage and a sparse LU wrapper around faer.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{NschError, Result};

/// Accumulates (row, col, value) entries; duplicates are summed on build.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    /// Adds every entry of `m` scaled by `s`, shifted by the given offsets.
    pub fn add_block(&mut self, m: &CsrMatrix, row_off: usize, col_off: usize, s: f64) {
        for (i, j, v) in m.iter() {
            self.push(i + row_off, j + col_off, s * v);
        }
    }

    pub fn add_block_transposed(&mut self, m: &CsrMatrix, row_off: usize, col_off: usize, s: f64) {
        for (i, j, v) in m.iter() {
            self.push(j + row_off, i + col_off, s * v);
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = TripletBuilder::with_capacity(n, n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        let mut t = TripletBuilder::with_capacity(d.len(), d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            t.push(i, i, v);
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |k| (i, self.indices[k], self.data[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(k) => self.data[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transpose matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, j, v) in self.iter() {
            y[j] += v * x[i];
        }
        y
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.iter() {
            t.push(j, i, v);
        }
        t.build()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// a·self + b·other
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        t.add_block(self, 0, 0, a);
        t.add_block(other, 0, 0, b);
        t.build()
    }

    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut t = TripletBuilder::with_capacity(self.nrows, other.ncols, self.nnz() * 4);
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                t.push(i, j, acc[j]);
                acc[j] = 0.0;
                mark[j] = false;
            }
            touched.clear();
        }
        t.build()
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.iter().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Writes `row col value` lines (zero-based) preceded by a size header.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# rows {} cols {} nnz {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{} {} {:.16e}", i, j, v)?;
        }
        Ok(())
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<Triplet<usize, usize, f64>> =
            self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| NschError::Singular(format!("sparse matrix construction failed: {e:?}")))
    }
}

/// Sparse LU factorization with a residual check on every solve.
pub struct LuFactor {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor").field("n", &self.matrix.nrows).finish()
    }
}

impl LuFactor {
    pub fn new(matrix: &CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(NschError::InvalidInput("LU requires a square matrix".into()));
        }
        let a = matrix.to_faer()?;
        let lu = a
            .sp_lu()
            .map_err(|e| NschError::Singular(format!("LU factorization failed: {e:?}")))?;
        Ok(Self { matrix: matrix.clone(), lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let sol = self.lu.solve(&rhs);
        let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NschError::Singular("non-finite solution".into()));
        }
        let r = self.matrix.matvec(&x);
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let anorm = self.matrix.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xnorm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = r.iter().zip(b).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        if res > 1e-6 * (bnorm + anorm * xnorm) && res > 1e-300 {
            return Err(NschError::Singular(format!("solve residual {res:e} too large")));
        }
        Ok(x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
