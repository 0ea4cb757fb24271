//! Row-major dense matrices with parallel products, and thin wrappers over
//! the faer factorizations used by the solvers.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Accum, Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let mut m = Self::zeros(rows, cols);
        par::for_each_row(&mut m.data, cols, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        par::map_indices(self.rows, |i| dot(self.row(i), x))
    }

    /// `Aᵀ x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec dimension");
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += a * xi;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `(A + Aᵀ)/2`
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column(x: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

/// LU factorization with partial pivoting.
pub struct LuFactor {
    lu: PartialPivLu<f64>,
    n: usize,
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor").field("n", &self.n).finish()
    }
}

impl LuFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch("LU of a non-square matrix".into()));
        }
        Ok(Self { lu: a.as_faer().partial_piv_lu(), n: a.rows })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!("rhs of length {}", b.len())));
        }
        let x = self.lu.solve(column(b));
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("LU solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

/// Eigendecomposition of a symmetric matrix, used for spectrally truncated solves.
#[derive(Debug)]
pub struct SymmetricEigen {
    values: Vec<f64>,
    vectors: Mat<f64>,
}

impl SymmetricEigen {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let evd = a
            .as_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::SolveFailure(format!("eigendecomposition failed: {e:?}")))?;
        let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        Ok(Self { values, vectors: evd.U().to_owned() })
    }

    /// Eigenvalues in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Ratio of the largest to the smallest eigenvalue magnitude.
    pub fn condition(&self) -> f64 {
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        max / min
    }

    /// Solves `A x = b`, discarding eigenvalues below `rel_cutoff` times the
    /// largest. Returns the solution and the number of dropped modes.
    pub fn solve_truncated(&self, b: &[f64], rel_cutoff: f64) -> (Vec<f64>, usize) {
        let (mut x, dropped) = self.solve_truncated_many(&[b.to_vec()], rel_cutoff);
        (x.pop().expect("one right-hand side"), dropped)
    }

    /// [`Self::solve_truncated`] for several right-hand sides at once.
    pub fn solve_truncated_many(&self, rhs: &[Vec<f64>], rel_cutoff: f64) -> (Vec<Vec<f64>>, usize) {
        let n = self.values.len();
        let k = rhs.len();
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<bool> = self.values.iter().map(|l| l.abs() > rel_cutoff * max).collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        let b = Mat::from_fn(n, k, |i, j| rhs[j][i]);
        let mut c = Mat::<f64>::zeros(n, k);
        let par = faer::get_global_parallelism();
        matmul(&mut c, Accum::Replace, self.vectors.transpose(), &b, 1.0, par);
        for j in 0..k {
            for i in 0..n {
                c[(i, j)] = if keep[i] { c[(i, j)] / self.values[i] } else { 0.0 };
            }
        }
        let mut x = Mat::<f64>::zeros(n, k);
        matmul(&mut x, Accum::Replace, &self.vectors, &c, 1.0, par);
        ((0..k).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect(), dropped)
    }
}
