//! Dense complex matrices, tolerance-aware structural predicates and the
//! Hermitian / normal eigensolvers the rest of the crate is built on.

pub mod eigen;
mod predicates;

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eigen::{
    general_normal_eigendecomposition, hermitian_eigendecomposition, normal_eigendecomposition,
    EigenDecomposition, EigenGroup,
};
pub use predicates::{
    inverse_of_unitary_multiple, is_multiple_of_identity, is_multiple_of_unitary, is_zero,
    scalars_agree,
};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not a multiple of a unitary")]
    NotMultipleOfUnitary,
    #[error("matrix is not normal (commutator norm {deviation:.3e})")]
    NotNormal { deviation: f64 },
    #[error("singular block: a zero multiple of a unitary has no inverse")]
    SingularBlock,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Comparison tolerances shared by every predicate.
///
/// All three are relative: thresholds are scaled by `1 + ‖·‖_F` of the
/// matrix or parent matrix being tested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Structural comparisons (identity / unitary multiples, zero blocks, scalar equality).
    pub cmp: f64,
    /// Eigenvalue grouping and spectrum matching.
    pub group: f64,
    /// Final witness residual.
    pub verify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cmp: 1e-9,
            group: 1e-7,
            verify: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn new(cmp: f64, group: f64, verify: f64) -> Result<Self, String> {
        let t = Tolerances { cmp, group, verify };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = self.cmp > 0.0 && self.cmp <= self.group && self.group <= self.verify && self.verify < 1.0;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "tolerances must satisfy 0 < cmp <= group <= verify < 1 (got cmp={}, group={}, verify={})",
                self.cmp, self.group, self.verify
            ))
        }
    }
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries supplied for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, ONE)
    }

    pub fn scalar(n: usize, alpha: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = alpha;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input; use
    /// [`CMatrix::new`] for fallible construction.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        CMatrix::new(r, c, data).expect("non-finite entry")
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|row| row.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn real_diagonal(values: &[f64]) -> Self {
        let vals: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diagonal(&vals)
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// Row-major entries.
    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMatrix {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, alpha: C64) -> CMatrix {
        self.map(|z| z * alpha)
    }

    pub fn scale_real(&self, alpha: f64) -> CMatrix {
        self.map(|z| z * alpha)
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhs*` without materializing the adjoint.
    pub fn mul_adjoint(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.cols, "mul_adjoint: inner dimensions differ");
        CMatrix::from_fn(self.rows, rhs.rows, |i, j| {
            self.row(i)
                .iter()
                .zip(rhs.row(j))
                .map(|(&a, &b)| a * b.conj())
                .sum()
        })
    }

    /// `self* · rhs` without materializing the adjoint.
    pub fn adjoint_mul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, rhs.rows, "adjoint_mul: inner dimensions differ");
        let mut out = CMatrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i].conj();
                if a == ZERO {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// `(M + M*) / 2`.
    pub fn hermitian_part(&self) -> CMatrix {
        assert!(self.is_square());
        CMatrix::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// `(M − M*) / 2i`, Hermitian.
    pub fn skew_part_over_i(&self) -> CMatrix {
        assert!(self.is_square());
        let half_over_i = C64::new(0.0, -0.5);
        CMatrix::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] - self[(j, i)].conj()) * half_over_i)
    }

    pub fn submatrix(&self, row0: usize, nrows: usize, col0: usize, ncols: usize) -> CMatrix {
        assert!(row0 + nrows <= self.rows && col0 + ncols <= self.cols, "submatrix out of range");
        CMatrix::from_fn(nrows, ncols, |i, j| self[(row0 + i, col0 + j)])
    }

    pub fn set_submatrix(&mut self, row0: usize, col0: usize, block: &CMatrix) {
        assert!(row0 + block.rows <= self.rows && col0 + block.cols <= self.cols, "block out of range");
        for i in 0..block.rows {
            let dst = (row0 + i) * self.cols + col0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Replaces rows `[offset, offset + k)` with `block · rows`, where `block` is k×k.
    pub fn apply_left_block(&mut self, offset: usize, block: &CMatrix) {
        let k = block.rows;
        assert!(block.is_square() && offset + k <= self.rows);
        let old = self.submatrix(offset, k, 0, self.cols);
        let new = block.matmul(&old).expect("square block");
        self.set_submatrix(offset, 0, &new);
    }

    /// Replaces columns `[offset, offset + k)` with `cols · block*`, where `block` is k×k.
    pub fn apply_right_adjoint_block(&mut self, offset: usize, block: &CMatrix) {
        let k = block.rows;
        assert!(block.is_square() && offset + k <= self.cols);
        let old = self.submatrix(0, self.rows, offset, k);
        let new = old.mul_adjoint(block);
        self.set_submatrix(0, offset, &new);
    }

    /// `‖M·M* − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        assert!(self.is_square());
        (&self.mul_adjoint(self) - &CMatrix::identity(self.rows)).frobenius_norm()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix product dimensions")
    }
}

impl Mul<&CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        &self * rhs
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix sum dimensions");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix difference dimensions");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Serialized as an array of rows, each row an array of `[re, im]` pairs.
impl Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let rows: Vec<Vec<C64>> = Vec::deserialize(deserializer)?;
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(k) = rows.iter().position(|r| r.len() != cols) {
            return Err(D::Error::custom(format!(
                "row {} has {} entries, expected {cols}",
                k + 1,
                rows[k].len()
            )));
        }
        let n = rows.len();
        CMatrix::new(n, cols, rows.into_iter().flatten().collect()).map_err(D::Error::custom)
    }
}
