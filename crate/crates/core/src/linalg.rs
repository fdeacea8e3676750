//! Small dense row-major matrices. Sized for regime counts in the tens,
//! not for general numerical linear algebra.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
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

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-T::one()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Row vector times matrix: `v^T A`.
    pub fn left_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len());
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| v[i] * self[(i, j)]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Solves `self * X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if !self.is_square() || rhs.rows != self.rows {
            return Err(Error::Dimension(format!(
                "cannot solve {}x{} system with {}x{} right-hand side",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = a.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, a[(i, k)].abs()))
                    .fold(
                        (k, -T::one()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot <= T::epsilon() * scale {
                return Err(Error::Numerical(format!(
                    "singular matrix (pivot {pivot} in column {k})"
                )));
            }
            if p != k {
                a.swap_rows(p, k);
                b.swap_rows(p, k);
            }
            let akk = a[(k, k)];
            for i in k + 1..n {
                let factor = a[(i, k)] / akk;
                if factor == T::zero() {
                    continue;
                }
                for j in k..n {
                    a[(i, j)] = a[(i, j)] - factor * a[(k, j)];
                }
                for j in 0..b.cols {
                    b[(i, j)] = b[(i, j)] - factor * b[(k, j)];
                }
            }
        }
        for j in 0..b.cols {
            for i in (0..n).rev() {
                let mut s = b[(i, j)];
                for k in i + 1..n {
                    s = s - a[(i, k)] * b[(k, j)];
                }
                b[(i, j)] = s / a[(i, i)];
            }
        }
        Ok(b)
    }

    pub fn solve_vec(&self, rhs: &[T]) -> Result<Vec<T>> {
        let b = Self::from_row_major(rhs.len(), 1, rhs.to_vec())?;
        Ok(self.solve(&b)?.data)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix exponential by scaling and squaring with the diagonal [6/6] Padé
/// approximant. The scaled matrix has 1-norm at most 1/2, where the Padé
/// truncation error is below 1e-19.
pub fn expm<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::Dimension(
            "matrix exponential of a non-square matrix".into(),
        ));
    }
    let n = a.rows();
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(Error::Numerical(
            "matrix exponential of a non-finite matrix".into(),
        ));
    }
    let half = T::lit(0.5);
    let mut squarings = 0u32;
    if norm > half {
        squarings = (norm / half).log2().ceil().to_u32().unwrap_or(0);
    }
    let scaled = a.scaled(T::one() / T::lit(2f64.powi(squarings as i32)));

    const Q: usize = 6;
    let mut coeffs = [1.0f64; Q + 1];
    for k in 1..=Q {
        coeffs[k] = coeffs[k - 1] * (Q - k + 1) as f64 / (k * (2 * Q - k + 1)) as f64;
    }
    let mut numer = Matrix::identity(n);
    let mut denom = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        power = power.matmul(&scaled);
        let term = power.scaled(T::lit(c));
        numer = numer.add(&term);
        denom = if k % 2 == 0 {
            denom.add(&term)
        } else {
            denom.sub(&term)
        };
    }
    let mut result = denom.solve(&numer)?;
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}
