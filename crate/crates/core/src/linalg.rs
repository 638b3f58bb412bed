//! Small dense real matrices and the handful of factorizations the projector
//! calculus needs: products, Gauss-Jordan inversion with partial pivoting,
//! pivot-count rank, the stacked block inverse `(Φ₁; Φ₂)⁻¹ = (Φ₁⁺, Φ₂⁺)` and
//! the Moore-Penrose right inverse `Φᵀ(ΦΦᵀ)⁻¹` together with its derivative.
//!
//! Matrices here are desk scale (m ≤ 20); every routine is O(m³) or cheaper.
//! All residual norms in the crate are Frobenius norms.

use std::fmt;
use std::ops::{Index, IndexMut, Range};

use serde::ser::{Serialize, SerializeSeq, Serializer};
use thiserror::Error;

/// Default relative pivot tolerance for rank and singularity decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to tolerance (no usable pivot in column {pivot_col})")]
    Singular { pivot_col: usize },
    #[error("stacked frame (Φ₁; Φ₂) is singular: the condition det(Φ₁; Φ₂) ≠ 0 is violated (pivot column {pivot_col})")]
    SingularStack { pivot_col: usize },
    #[error("rank deficient: expected rank {expected}, found {found}")]
    RankDeficient { expected: usize, found: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Row-major dense real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()
    }
}

/// Serializes as a list of rows.
impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for row in self.data.chunks(self.cols.max(1)) {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self::zeros(k, k);
        for i in 0..k {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch { op: "from_row_major", left: (rows, cols), right: (data.len(), 1) });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from literal rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self { rows: rows.len(), cols, data: rows.iter().flat_map(|r| r.iter().copied()).collect() }
    }

    /// Column vector from a slice.
    pub fn column_vector(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                m[(i, j)] = a * b;
            }
        }
        m
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        matmul(self, other)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::ShapeMismatch { op: "matvec", left: self.shape(), right: (v.len(), 1) });
        }
        Ok(self
            .data
            .chunks(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `self += s * other`, shapes must agree.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    fn zip_with(&self, op: &'static str, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::ShapeMismatch { op, left: self.shape(), right: other.shape() });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Columns `range` as a new matrix.
    pub fn column_block(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.cols);
        let mut out = Self::zeros(self.rows, range.len());
        for i in 0..self.rows {
            for (jj, j) in range.clone().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    /// Rows `range` as a new matrix.
    pub fn row_block(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.rows);
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    pub fn vstack(&self, below: &Self) -> Result<Self, LinalgError> {
        if self.cols != below.cols {
            return Err(LinalgError::ShapeMismatch { op: "vstack", left: self.shape(), right: below.shape() });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Self { rows: self.rows + below.rows, cols: self.cols, data })
    }

    pub fn hstack(&self, right: &Self) -> Result<Self, LinalgError> {
        if self.rows != right.rows {
            return Err(LinalgError::ShapeMismatch { op: "hstack", left: self.shape(), right: right.shape() });
        }
        let mut out = Self::zeros(self.rows, self.cols + right.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..right.cols {
                out[(i, self.cols + j)] = right[(i, j)];
            }
        }
        Ok(out)
    }
}

/// Euclidean norm of a vector.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::ShapeMismatch { op: "matmul", left: a.shape(), right: b.shape() });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let row = &a.data[i * a.cols..(i + 1) * a.cols];
        let dst = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let src = &b.data[k * b.cols..(k + 1) * b.cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += aik * s;
            }
        }
    }
    Ok(out)
}

/// Inverse with the default pivot tolerance.
pub fn invert(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    invert_with_tol(a, DEFAULT_RANK_TOL)
}

/// Gauss-Jordan elimination with partial pivoting. A pivot at or below
/// `tol * max|a_ij|` is treated as zero.
pub fn invert_with_tol(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let k = a.rows;
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(LinalgError::Singular { pivot_col: 0 });
    }
    let threshold = tol * scale;
    let mut work = a.clone();
    let mut inv = DenseMatrix::identity(k);
    for col in 0..k {
        let (piv_row, piv_abs) = (col..k)
            .map(|r| (r, work[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= threshold {
            return Err(LinalgError::Singular { pivot_col: col });
        }
        if piv_row != col {
            swap_rows(&mut work, piv_row, col);
            swap_rows(&mut inv, piv_row, col);
        }
        let p = work[(col, col)];
        for j in 0..k {
            work[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = work[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..k {
                work[(r, j)] -= f * work[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    for j in 0..m.cols {
        m.data.swap(a * m.cols + j, b * m.cols + j);
    }
}

/// Number of pivots larger than `tol * max|a_ij|` met by row elimination
/// with partial pivoting. Columns without such a pivot are skipped.
pub fn rank(a: &DenseMatrix, tol: f64) -> usize {
    let scale = a.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return 0;
    }
    let threshold = tol * scale;
    let mut work = a.clone();
    let mut r = 0;
    for col in 0..work.cols {
        if r == work.rows {
            break;
        }
        let (piv_row, piv_abs) = (r..work.rows)
            .map(|i| (i, work[(i, col)].abs()))
            .fold((r, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= threshold {
            continue;
        }
        swap_rows(&mut work, piv_row, r);
        let p = work[(r, col)];
        for i in r + 1..work.rows {
            let f = work[(i, col)] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..work.cols {
                work[(i, j)] -= f * work[(r, j)];
            }
        }
        r += 1;
    }
    r
}

/// Column blocks of the inverse of the stacked matrix `(Φ₁; Φ₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoinversePair {
    /// m x n
    pub phi1_plus: DenseMatrix,
    /// m x p
    pub phi2_plus: DenseMatrix,
}

impl PseudoinversePair {
    /// `‖(Φ₁; Φ₂)(Φ₁⁺, Φ₂⁺) − E‖_F`.
    pub fn block_residual(&self, phi1: &DenseMatrix, phi2: &DenseMatrix) -> Result<f64, LinalgError> {
        let stack = phi1.vstack(phi2)?;
        let inv = self.phi1_plus.hstack(&self.phi2_plus)?;
        Ok(matmul(&stack, &inv)?.sub(&DenseMatrix::identity(stack.rows))?.frobenius_norm())
    }
}

/// Inverts the stacked `m x m` matrix `(Φ₁; Φ₂)` (Φ₁ is `n x m`, Φ₂ is
/// `p x m`, `n + p = m`) and splits the result into its first `n` and last
/// `p` columns.
pub fn stacked_pseudoinverse(phi1: &DenseMatrix, phi2: &DenseMatrix) -> Result<PseudoinversePair, LinalgError> {
    stacked_pseudoinverse_with_tol(phi1, phi2, DEFAULT_RANK_TOL)
}

pub fn stacked_pseudoinverse_with_tol(
    phi1: &DenseMatrix,
    phi2: &DenseMatrix,
    tol: f64,
) -> Result<PseudoinversePair, LinalgError> {
    let m = phi1.cols;
    if phi2.cols != m || phi1.rows + phi2.rows != m {
        return Err(LinalgError::ShapeMismatch { op: "stacked_pseudoinverse", left: phi1.shape(), right: phi2.shape() });
    }
    let stack = phi1.vstack(phi2)?;
    let inv = invert_with_tol(&stack, tol).map_err(|e| match e {
        LinalgError::Singular { pivot_col } => LinalgError::SingularStack { pivot_col },
        other => other,
    })?;
    Ok(PseudoinversePair {
        phi1_plus: inv.column_block(0..phi1.rows),
        phi2_plus: inv.column_block(phi1.rows..m),
    })
}

fn gram_inverse(phi: &DenseMatrix, tol: f64) -> Result<DenseMatrix, LinalgError> {
    let n = phi.rows;
    let r = rank(phi, tol);
    if r != n {
        return Err(LinalgError::RankDeficient { expected: n, found: r });
    }
    invert_with_tol(&matmul(phi, &phi.transpose())?, tol).map_err(|_| LinalgError::RankDeficient { expected: n, found: r })
}

/// Moore-Penrose right inverse `Φᵀ(ΦΦᵀ)⁻¹` of a full-row-rank `n x m` matrix.
pub fn right_pseudoinverse(phi: &DenseMatrix, tol: f64) -> Result<DenseMatrix, LinalgError> {
    let g = gram_inverse(phi, tol)?;
    matmul(&phi.transpose(), &g)
}

/// Time derivative of `Φᵀ(ΦΦᵀ)⁻¹` given `Φ` and `dΦ/dt`:
///
/// `dΦᵀ G − Φᵀ G (dΦ Φᵀ + Φ dΦᵀ) G` with `G = (ΦΦᵀ)⁻¹`.
pub fn right_pseudoinverse_derivative(
    phi: &DenseMatrix,
    dphi: &DenseMatrix,
    tol: f64,
) -> Result<DenseMatrix, LinalgError> {
    if phi.shape() != dphi.shape() {
        return Err(LinalgError::ShapeMismatch { op: "right_pseudoinverse_derivative", left: phi.shape(), right: dphi.shape() });
    }
    let g = gram_inverse(phi, tol)?;
    let phi_t = phi.transpose();
    let dphi_t = dphi.transpose();
    let dgram = matmul(dphi, &phi_t)?.add(&matmul(phi, &dphi_t)?)?;
    let first = matmul(&dphi_t, &g)?;
    let second = matmul(&matmul(&matmul(&phi_t, &g)?, &dgram)?, &g)?;
    first.sub(&second)
}

/// `d(A⁻¹)/dt = −A⁻¹ (dA/dt) A⁻¹`, given `A⁻¹` and `dA/dt`.
pub fn inverse_derivative(inv: &DenseMatrix, da: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Ok(matmul(&matmul(inv, da)?, inv)?.scale(-1.0))
}
