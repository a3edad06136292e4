//! Dense row-major `f64` matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ensure, Error, Result};

/// Dense real matrix stored row-major.
///
/// Every entry is finite. Constructors reject NaN/Inf and operations that
/// could overflow check their output.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

fn check_finite(data: &[f64], origin: &'static str) -> Result<()> {
    ensure!(data.iter().all(|x| x.is_finite()), Error::NonFinite(origin));
    Ok(())
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Error::DimensionMismatch(format!("{} values for a {}x{} matrix", data.len(), rows, cols))
        );
        check_finite(&data, "Matrix::new")?;
        Ok(Matrix { rows, cols, data })
    }

    /// Internal constructor for buffers already known to be finite.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|x| x.is_finite()));
        Matrix { rows, cols, data }
    }

    pub(crate) fn from_raw_checked(rows: usize, cols: usize, data: Vec<f64>, origin: &'static str) -> Result<Self> {
        check_finite(&data, origin)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        check_finite(values, "Matrix::diag")?;
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        Ok(m)
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            ensure!(
                r.len() == cols,
                Error::DimensionMismatch(format!("row {} has {} entries, expected {}", i, r.len(), cols))
            );
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        ensure!(
            self.cols == other.rows,
            Error::DimensionMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ))
        );
        let n = other.cols;
        let mut out = vec![0.0; self.rows * n];
        for i in 0..self.rows {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Matrix::from_raw_checked(self.rows, n, out, "matmul")
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        ensure!(
            self.rows == other.rows,
            Error::DimensionMismatch(format!(
                "t_matmul {}x{}ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ))
        );
        let (m, n) = (self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b, &mut out[i * n..(i + 1) * n]);
            }
        }
        Matrix::from_raw_checked(m, n, out, "t_matmul")
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        ensure!(
            self.cols == other.cols,
            Error::DimensionMismatch(format!(
                "matmul_t {}x{} by {}x{}ᵀ",
                self.rows, self.cols, other.rows, other.cols
            ))
        );
        let (m, n) = (self.rows, other.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = self.row(i);
            for j in 0..n {
                out[i * n + j] = dot(a, other.row(j));
            }
        }
        Matrix::from_raw_checked(m, n, out, "matmul_t")
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram(&self) -> Result<Matrix> {
        let d = self.cols;
        let t = self.transpose();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            let ti = t.row(i);
            for j in 0..=i {
                let v = dot(ti, t.row(j));
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        Matrix::from_raw_checked(d, d, out, "gram")
    }

    pub fn scale(&self, s: f64) -> Result<Matrix> {
        let data = self.data.iter().map(|x| x * s).collect();
        Matrix::from_raw_checked(self.rows, self.cols, data, "scale")
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, origin: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        ensure!(
            self.shape() == other.shape(),
            Error::DimensionMismatch(format!(
                "{} {}x{} with {}x{}",
                origin, self.rows, self.cols, other.rows, other.cols
            ))
        );
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Matrix::from_raw_checked(self.rows, self.cols, data, origin)
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    /// Largest absolute entry of `self − selfᵀ`; `None` when not square.
    pub fn asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        Some(worst)
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }

    /// Columns `start..end`.
    pub fn column_block(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Matrix::from_raw(self.rows, end - start, data)
    }

    /// Concatenates matrices side by side.
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        ensure!(
            parts.iter().all(|m| m.rows == rows),
            Error::DimensionMismatch(format!("hstack with unequal row counts"))
        );
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Ok(Matrix::from_raw(rows, cols, data))
    }

    /// Stacks matrices vertically.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        ensure!(
            parts.iter().all(|m| m.cols == cols),
            Error::DimensionMismatch(format!("vstack with unequal column counts"))
        );
        let rows: usize = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix::from_raw(rows, cols, data))
    }

    /// Column means and standard deviations `sqrt(unbiased variance + eps)`.
    pub fn column_mean_std(&self, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure!(self.rows >= 2, Error::DegenerateBatch { rows: self.rows });
        ensure!(eps >= 0.0, Error::Contract(format!("eps must be >= 0, got {eps}")));
        let means = self.column_means();
        let mut sq = vec![0.0; self.cols];
        for r in 0..self.rows {
            for ((acc, &x), &m) in sq.iter_mut().zip(self.row(r)).zip(&means) {
                let d = x - m;
                *acc += d * d;
            }
        }
        let denom = (self.rows - 1) as f64;
        let stds = sq.iter().map(|s| libm::sqrt(s / denom + eps)).collect();
        Ok((means, stds))
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, &x) in means.iter_mut().zip(self.row(r)) {
                *m += x;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Subtracts each column's mean.
    pub fn center_columns(&self) -> Matrix {
        let means = self.column_means();
        let mut out = self.clone();
        for r in 0..self.rows {
            for (x, m) in out.row_mut(r).iter_mut().zip(&means) {
                *x -= m;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_neutral() {
        let m = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 4.0, 7.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.shape(), (2, 1));
        assert_eq!(p.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn product_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&Matrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn transposed_products_agree() {
        let a = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.7 - 2.0).unwrap();
        let b = Matrix::from_fn(4, 2, |r, c| (r + 2 * c) as f64 - 1.5).unwrap();
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        let c = Matrix::from_fn(5, 3, |r, c| (r as f64 - c as f64) * 0.3).unwrap();
        let lhs = a.matmul_t(&c).unwrap();
        let rhs = a.matmul(&c.transpose()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        let big = Matrix::new(1, 1, vec![1e300]).unwrap();
        assert!(matches!(big.matmul(&big), Err(Error::NonFinite(_))));
    }

    #[test]
    fn mean_std_of_two_point_column() {
        let z = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let (m, s) = z.column_mean_std(1e-4).unwrap();
        assert_eq!(m, vec![1.0]);
        assert!((s[0] - 2.0001f64.sqrt()).abs() < 1e-15);
        assert!((s[0] - 1.414249).abs() < 1e-6);
    }

    #[test]
    fn mean_std_of_constant_column() {
        let z = Matrix::from_rows(&[[5.0], [5.0], [5.0]]).unwrap();
        let (m, s) = z.column_mean_std(1e-4).unwrap();
        assert_eq!(m, vec![5.0]);
        assert!((s[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mean_std_needs_two_rows() {
        let z = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(z.column_mean_std(1e-4), Err(Error::DegenerateBatch { rows: 1 }));
    }

    #[test]
    fn centering() {
        let z = Matrix::from_rows(&[[1.0, 7.0], [3.0, 7.0]]).unwrap();
        let c = z.center_columns();
        assert_eq!(c.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        let again = c.center_columns();
        assert!(again.sub(&c).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..19).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..19).map(|i| 1.0 + i as f64 * 0.5).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }
}
