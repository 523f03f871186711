//! Dense row-major `f64` matrices.
//!
//! Second-order tensors are only ever handled through their coordinate matrices in
//! the standard basis, so every contraction the solvers need reduces to one of
//! [`Matrix::matmul`], [`Matrix::frobenius_inner`] or [`Matrix::outer`]. Column
//! vectors are `n × 1` matrices or plain slices.

use std::fmt;
use std::ops::{Index, IndexMut, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of their row's largest magnitude mark the
/// matrix as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("matrix rows"))?;
        let cols = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Builds a matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        Ok(Self::from_rows(columns)?.transpose())
    }

    /// An `n × 1` column vector.
    pub fn column_vector(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copy of the columns in `range`.
    pub fn columns(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.cols {
            return Err(Error::Dimension(format!(
                "column range {range:?} invalid for {} columns",
                self.cols
            )));
        }
        let width = range.end - range.start;
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Self::new(self.rows, width, data)
    }

    /// Places `other`'s columns to the right of `self`'s.
    pub fn hstack(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape("hstack", self.shape(), other.shape()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Self::new(self.rows, cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.require_same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Self> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    /// Standard matrix product `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Self::new(self.rows, other.cols, out)
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `A : B = Σ_ij A_ij B_ij`.
    pub fn frobenius_inner(&self, other: &Matrix) -> Result<f64> {
        self.require_same_shape(other, "frobenius_inner")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `(u ⊗ v)_ij = u_i v_j`.
    pub fn outer(u: &[f64], v: &[f64]) -> Result<Self> {
        if u.is_empty() || v.is_empty() {
            return Err(Error::Empty("outer product operand"));
        }
        let data = u.iter().flat_map(|&a| v.iter().map(move |&b| a * b)).collect();
        Self::new(u.len(), v.len(), data)
    }

    /// Sum of each row, as an `rows × 1` column.
    pub fn row_sums(&self) -> Self {
        let data = (0..self.rows).map(|i| self.row(i).iter().sum()).collect();
        Self {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    pub fn determinant(&self) -> Result<f64> {
        self.require_square("determinant")?;
        Ok(match Lu::factor(self) {
            Some(lu) => lu.determinant(),
            None => 0.0,
        })
    }

    pub fn inverse(&self) -> Result<Self> {
        self.require_square("inverse")?;
        let lu = Lu::factor(self).ok_or(Error::Singular("no inverse exists"))?;
        Ok(lu.inverse())
    }

    fn require_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    fn require_square(&self, op: &'static str) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::shape(op, self.shape(), (self.cols, self.rows)));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.cols + j]
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

/// LU factorisation with partial pivoting, `P·A = L·U`, stored compactly.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    /// Returns `None` when a pivot falls below [`PIVOT_TOLERANCE`] times the largest
    /// magnitude of its original row.
    fn factor(a: &Matrix) -> Option<Self> {
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let row_scale: Vec<f64> = (0..n)
            .map(|i| a.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect();
        let mut swaps = 0;

        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let scale = row_scale[perm[pivot_row]];
            if scale == 0.0 || pivot_abs < PIVOT_TOLERANCE * scale {
                return None;
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
                swaps += 1;
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Some(Self { n, lu, perm, swaps })
    }

    fn determinant(&self) -> f64 {
        let sign = if self.swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
        (0..self.n).fold(sign, |acc, i| acc * self.lu[i * self.n + i])
    }

    fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = if self.perm[i] == j { 1.0 } else { 0.0 };
            }
            // forward substitution, unit lower triangle
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= self.lu[i * n + k] * col[k];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in i + 1..n {
                    s -= self.lu[i * n + k] * col[k];
                }
                col[i] = s / self.lu[i * n + i];
            }
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = m(&[&[1.0, -2.0, 3.0], &[0.5, 4.0, -1.0], &[2.0, 2.0, 7.0]]);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);

        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let c = m(&[&[5.0], &[6.0]]);
        assert_eq!(b.matmul(&c).unwrap(), m(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                left: (2, 3),
                right: (2, 2),
                ..
            }
        ));
    }

    #[test]
    fn transpose_cases() {
        let row = m(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(row.transpose(), m(&[&[1.0], &[2.0], &[3.0]]));
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(a.transpose().transpose(), a);
        let sym = m(&[&[2.0, 1.0], &[1.0, 3.0]]);
        assert_eq!(sym.transpose(), sym);
    }

    #[test]
    fn frobenius_values() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.frobenius_inner(&Matrix::identity(2)).unwrap(), 5.0);
        assert_eq!(a.frobenius_inner(&Matrix::zeros(2, 2)).unwrap(), 0.0);
        let n = a.frobenius_norm();
        assert!((a.frobenius_inner(&a).unwrap() - n * n).abs() < 1e-12);
        assert_eq!(m(&[&[3.0, 4.0]]).frobenius_norm(), 5.0);
        assert_eq!(Matrix::zeros(3, 2).frobenius_norm(), 0.0);
        assert!((a.scale(-2.5).frobenius_norm() - 2.5 * n).abs() < 1e-12);
        assert!(a.frobenius_inner(&Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn outer_cases() {
        assert_eq!(
            Matrix::outer(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            m(&[&[0.0, 1.0], &[0.0, 0.0]])
        );
        assert_eq!(
            Matrix::outer(&[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            m(&[&[3.0, 4.0], &[6.0, 8.0]])
        );
        let o = Matrix::outer(&[1.5, -2.0, 0.3], &[0.7, 4.0, -1.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let minor = o[(i, k)] * o[(j, l)] - o[(i, l)] * o[(j, k)];
                        assert!(minor.abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn determinant_cases() {
        assert_eq!(Matrix::identity(4).determinant().unwrap(), 1.0);
        assert!((m(&[&[1.0, 1.0], &[1.0, 2.0]]).determinant().unwrap() - 1.0).abs() < 1e-15);
        let repeated = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]]);
        assert_eq!(repeated.determinant().unwrap(), 0.0);
        // one swap flips the sign
        assert!((m(&[&[0.0, 1.0], &[1.0, 0.0]]).determinant().unwrap() + 1.0).abs() < 1e-15);
        assert!(Matrix::zeros(2, 3).determinant().is_err());
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(Matrix::identity(3).inverse().unwrap(), Matrix::identity(3));
        let inv = m(&[&[1.0, 1.0], &[1.0, 2.0]]).inverse().unwrap();
        let expected = m(&[&[2.0, -1.0], &[-1.0, 1.0]]);
        assert!(inv.sub(&expected).unwrap().frobenius_norm() < 1e-14);
        assert!(matches!(Matrix::zeros(3, 3).inverse(), Err(Error::Singular(_))));
        assert!(Matrix::zeros(2, 3).inverse().is_err());
    }

    #[test]
    fn singularity_is_relative_to_row_scale() {
        // tiny but perfectly conditioned
        let tiny = Matrix::identity(3).scale(1e-200);
        assert!(tiny.inverse().is_ok());
        let nearly = m(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]]);
        assert!(matches!(nearly.inverse(), Err(Error::Singular(_))));
    }

    #[test]
    fn columns_and_hstack() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let left = a.columns(0..1).unwrap();
        let right = a.columns(1..3).unwrap();
        assert_eq!(left.hstack(&right).unwrap(), a);
        assert!(a.columns(2..4).is_err());
        assert_eq!(a.row_sums(), m(&[&[6.0], &[15.0]]));
    }

    #[test]
    fn construction_errors() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(Matrix::from_rows::<Vec<f64>>(&[]).is_err());
    }
}
