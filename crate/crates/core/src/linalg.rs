//! Dense row-major matrices and the handful of factorizations the solvers
//! need.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::math::sqrt;

/// Dense real matrix, one row per observation.
///
/// Entries are always finite. Empty shapes (zero rows or zero columns) are
/// representable so that an empty unlabeled block or a model without
/// controls needs no special casing; solvers reject them where they matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DataError> {
        if values.len() != rows * cols {
            return Err(DataError::Shape(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(DesignMatrix { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DesignMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(DataError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Build from a column-generating closure, useful in tests.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        DesignMatrix { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> DesignMatrix {
        DesignMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    /// Columns selected by index, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix::from_fn(self.rows, idx.len(), |i, j| self.get(i, idx[j]))
    }

    /// Stack `self` on top of `other`.
    pub fn vstack(&self, other: &DesignMatrix) -> Result<DesignMatrix, DataError> {
        if self.cols != other.cols {
            return Err(DataError::Shape(format!(
                "cannot stack {} columns on {} columns",
                self.cols, other.cols
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(DesignMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            values,
        })
    }

    /// Prepend one column (used to form `X = (Z, W)`).
    pub fn prepend_column(&self, col: &[f64]) -> Result<DesignMatrix, DataError> {
        if col.len() != self.rows {
            return Err(DataError::Shape(format!(
                "column of length {} for {} rows",
                col.len(),
                self.rows
            )));
        }
        Ok(DesignMatrix::from_fn(self.rows, self.cols + 1, |i, j| {
            if j == 0 {
                col[i]
            } else {
                self.get(i, j - 1)
            }
        }))
    }

    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.cols, "dimension mismatch in mul_vec");
        (0..self.rows).map(|i| crate::math::dot(self.row(i), b)).collect()
    }

    /// `A^T v`.
    pub fn tmul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "dimension mismatch in tmul_vec");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += vi * x;
            }
        }
        out
    }

    pub fn matmul(&self, other: &DesignMatrix) -> DesignMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = DesignMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.values[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        crate::math::max_abs(&self.values)
    }
}

/// Unnormalized cross-product sums over a subset of rows.
///
/// Keeping sums rather than means lets callers form training-fold Gram
/// matrices by subtraction (`all - held_out`) instead of recomputing them.
#[derive(Debug, Clone)]
pub struct CrossProducts {
    pub count: usize,
    /// `sum_i x_i x_i^T`, full symmetric `p x p`.
    pub xtx: DesignMatrix,
    /// `sum_i x_i y_i`.
    pub xty: Vec<f64>,
    /// `sum_i y_i^2`.
    pub yty: f64,
}

impl CrossProducts {
    pub fn compute(x: &DesignMatrix, y: &[f64], rows: Option<&[usize]>) -> CrossProducts {
        let p = x.cols();
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut yty = 0.0;
        let mut accumulate = |i: usize| {
            let r = x.row(i);
            let yi = y[i];
            yty += yi * yi;
            for a in 0..p {
                let xa = r[a];
                if xa == 0.0 {
                    continue;
                }
                xty[a] += xa * yi;
                let dst = &mut xtx[a * p + a..a * p + p];
                for (o, xb) in dst.iter_mut().zip(&r[a..]) {
                    *o += xa * xb;
                }
            }
        };
        let count = match rows {
            Some(idx) => {
                idx.iter().for_each(|&i| accumulate(i));
                idx.len()
            }
            None => {
                (0..x.rows()).for_each(&mut accumulate);
                x.rows()
            }
        };
        for a in 0..p {
            for b in (a + 1)..p {
                xtx[b * p + a] = xtx[a * p + b];
            }
        }
        CrossProducts {
            count,
            xtx: DesignMatrix {
                rows: p,
                cols: p,
                values: xtx,
            },
            xty,
            yty,
        }
    }

    /// `self - other`, for rows of `other` contained in `self`.
    pub fn minus(&self, other: &CrossProducts) -> CrossProducts {
        let xtx = self
            .xtx
            .values
            .iter()
            .zip(&other.xtx.values)
            .map(|(a, b)| a - b)
            .collect();
        CrossProducts {
            count: self.count - other.count,
            xtx: DesignMatrix {
                rows: self.xtx.rows,
                cols: self.xtx.cols,
                values: xtx,
            },
            xty: self.xty.iter().zip(&other.xty).map(|(a, b)| a - b).collect(),
            yty: self.yty - other.yty,
        }
    }

    /// Normalized `(X^T X / k, X^T y / k, y^T y / k)`.
    pub fn normalized(&self) -> (DesignMatrix, Vec<f64>, f64) {
        let k = self.count.max(1) as f64;
        let g = DesignMatrix {
            rows: self.xtx.rows,
            cols: self.xtx.cols,
            values: self.xtx.values.iter().map(|v| v / k).collect(),
        };
        (g, self.xty.iter().map(|v| v / k).collect(), self.yty / k)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not positive (matrix not numerically PD).
    pub fn factor(a: &DesignMatrix) -> Option<Cholesky> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut l = vec![0.0; n * n];
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(1e-300);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 1e-13 * scale {
                return None;
            }
            let djj = sqrt(d);
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for (x, y) in ri.iter().zip(rj) {
                    s -= x * y;
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { n, l })
    }

    /// `L g`, e.g. to turn independent standard normals into draws with
    /// covariance `L L'`.
    pub fn lower_mul(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| self.l[i * n..i * n + i + 1].iter().zip(g).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Returns `None` for a numerically singular matrix.
    pub fn factor(a: &DesignMatrix) -> Option<Lu> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut lu = a.values().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(1e-300);
        for k in 0..n {
            let (mut piv, mut best) = (k, lu[k * n + k].abs());
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= 1e-13 * scale {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pkk = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pkk;
                lu[i * n + k] = f;
                if f == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Some(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solve `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // A = P^T L U, so A^T = U^T L^T P.
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[k * n + i] * y[k];
            }
            y[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lu[k * n + i] * y[k];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

/// Ordinary least squares via the normal equations. `None` if `X^T X` is
/// singular.
pub fn ols(x: &DesignMatrix, y: &[f64]) -> Option<Vec<f64>> {
    let cp = CrossProducts::compute(x, y, None);
    let chol = Cholesky::factor(&cp.xtx)?;
    Some(chol.solve(&cp.xty))
}
