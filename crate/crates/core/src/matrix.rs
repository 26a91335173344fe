//! Dense row-major matrix with the small set of operations the solvers need.
//!
//! All entries are finite 64-bit reals; constructors reject NaN/Inf so every
//! downstream operation starts from valid data. Vectors are 1-column matrices.

use crate::error::{contract, numeric, Error, Result};

/// Dense real matrix, row-major: `data[i * cols + j]` holds entry (i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data.
    ///
    /// Errors if `data.len() != rows * cols`, if either dimension is zero, or
    /// if any entry is non-finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(contract(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(contract(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(numeric("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from row slices. Panics on ragged input; intended for literals in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "at least one row required");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data).expect("literal matrix")
    }

    /// Column vector from a slice.
    pub fn from_col(values: &[f64]) -> Self {
        Self::new(values.len(), 1, values.to_vec()).expect("column vector")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "dimensions must be positive");
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

    /// Diagonal matrix from entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
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

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Extracts column `j` as an n×1 matrix.
    pub fn col(&self, j: usize) -> Matrix {
        assert!(j < self.cols, "column index out of range");
        let data = (0..self.rows).map(|i| self.get(i, j)).collect();
        Self {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    /// Overwrites column `j` with the entries of an n×1 matrix.
    pub fn set_col(&mut self, j: usize, v: &Matrix) -> Result<()> {
        if v.rows != self.rows || v.cols != 1 {
            return Err(Error::Shape {
                op: "set_col",
                lhs: (self.rows, 1),
                rhs: (v.rows, v.cols),
            });
        }
        for i in 0..self.rows {
            self.data[i * self.cols + j] = v.data[i];
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Standard product; i-k-j loop order for row-major cache friendliness,
    /// with a register-accumulator fast path for matrix-vector products
    /// (identical addition order, so results match the general path bit for
    /// bit).
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        if other.cols == 1 {
            for i in 0..self.rows {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                let mut acc = 0.0;
                for (a_ik, b_k) in row.iter().zip(&other.data) {
                    if *a_ik != 0.0 {
                        acc += a_ik * b_k;
                    }
                }
                out.data[i] = acc;
            }
        } else {
            for i in 0..self.rows {
                for k in 0..self.cols {
                    let a_ik = self.data[i * self.cols + k];
                    if a_ik == 0.0 {
                        continue;
                    }
                    let out_row = i * other.cols;
                    let other_row = k * other.cols;
                    for j in 0..other.cols {
                        out.data[out_row + j] += a_ik * other.data[other_row + j];
                    }
                }
            }
        }
        if !out.data.iter().all(|v| v.is_finite()) {
            return Err(numeric("matmul produced non-finite entries"));
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product Σᵢⱼ aᵢⱼ·bᵢⱼ.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op: "inner",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Solves `self * x = rhs` for square `self` by LU with partial pivoting.
    /// `rhs` may have multiple columns.
    pub fn lu_solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(contract(format!(
                "lu_solve requires a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if rhs.rows != self.rows {
            return Err(Error::Shape {
                op: "lu_solve",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let n = self.rows;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let pivot_floor = 1e-13 * self.max_abs().max(f64::MIN_POSITIVE);

        for k in 0..n {
            let mut max_val = lu[k * n + k].abs();
            let mut max_row = k;
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > max_val {
                    max_val = v;
                    max_row = i;
                }
            }
            if max_val <= pivot_floor {
                return Err(numeric("singular system in lu_solve"));
            }
            if max_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, max_row * n + j);
                }
                perm.swap(k, max_row);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                for j in (k + 1)..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }

        let mut out = Matrix::zeros(n, rhs.cols);
        let mut x = vec![0.0; n];
        for c in 0..rhs.cols {
            for i in 0..n {
                x[i] = rhs.data[perm[i] * rhs.cols + c];
            }
            // forward substitution (unit lower factor)
            for i in 1..n {
                let mut sum = x[i];
                for j in 0..i {
                    sum -= lu[i * n + j] * x[j];
                }
                x[i] = sum;
            }
            // back substitution
            for i in (0..n).rev() {
                let mut sum = x[i];
                for j in (i + 1)..n {
                    sum -= lu[i * n + j] * x[j];
                }
                x[i] = sum / lu[i * n + i];
            }
            for i in 0..n {
                out.data[i * rhs.cols + c] = x[i];
            }
        }
        if !out.data.iter().all(|v| v.is_finite()) {
            return Err(numeric("lu_solve produced non-finite entries"));
        }
        Ok(out)
    }
}

impl std::fmt::Display for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.rows {
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:>10.4}", self.get(i, j))?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn matrix8() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-10.0_f64..10.0, 64)
            .prop_map(|data| Matrix::new(8, 8, data).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // matmul associativity within 1e-9 relative tolerance
        #[test]
        fn matmul_associative(a in matrix8(), b in matrix8(), c in matrix8()) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.max_abs().max(right.max_abs()).max(1.0);
            prop_assert!(left.sub(&right).unwrap().max_abs() <= 1e-9 * scale);
        }

        #[test]
        fn transpose_involution(a in matrix8()) {
            prop_assert_eq!(a.transpose().transpose(), a);
        }
    }
}
