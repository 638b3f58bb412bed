use thiserror::Error;

use super::{parse_expr, EvalError, Expr, ParseError};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix function shape {rows}x{cols} does not match {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Incompatible { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("entry ({row}, {col}): {source}")]
    Parse { row: usize, col: usize, source: ParseError },
    #[error("entry ({row}, {col}): {source}")]
    Eval { row: usize, col: usize, source: EvalError },
}

/// A `rows x cols` grid of scalar expressions in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunction {
    rows: usize,
    cols: usize,
    entries: Vec<Expr>,
}

impl MatrixFunction {
    /// Builds from row-major entries. Both dimensions must be positive.
    pub fn new(rows: usize, cols: usize, entries: Vec<Expr>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(MatrixError::Shape { rows, cols, len: entries.len() });
        }
        Ok(Self { rows, cols, entries })
    }

    /// Parses a grid of expression strings, one inner vector per row.
    pub fn parse<S: AsRef<str>>(grid: &[Vec<S>]) -> Result<Self, MatrixError> {
        let rows = grid.len();
        let cols = grid.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows * cols);
        for (i, row) in grid.iter().enumerate() {
            if row.len() != cols {
                return Err(MatrixError::Shape { rows, cols, len: entries.len() + row.len() });
            }
            for (j, text) in row.iter().enumerate() {
                let e = parse_expr(text.as_ref()).map_err(|source| MatrixError::Parse { row: i, col: j, source })?;
                entries.push(e);
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Self {
        assert!(rows > 0 && cols > 0, "matrix function dimensions must be positive");
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn constant(m: &DenseMatrix) -> Self {
        Self::from_fn(m.rows(), m.cols(), |i, j| Expr::Const(m[(i, j)]))
    }

    pub fn identity(k: usize) -> Self {
        Self::from_fn(k, k, |i, j| Expr::Const(if i == j { 1.0 } else { 0.0 }))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| Expr::Const(0.0))
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

    pub fn entry(&self, row: usize, col: usize) -> &Expr {
        &self.entries[row * self.cols + col]
    }

    /// Total node count over all entries.
    pub fn size(&self) -> usize {
        self.entries.iter().map(Expr::size).sum()
    }

    pub fn eval(&self, t: f64) -> Result<DenseMatrix, MatrixError> {
        let mut data = Vec::with_capacity(self.entries.len());
        for (k, e) in self.entries.iter().enumerate() {
            let v = e.eval(t).map_err(|source| MatrixError::Eval {
                row: k / self.cols,
                col: k % self.cols,
                source,
            })?;
            data.push(v);
        }
        Ok(DenseMatrix::from_row_major(self.rows, self.cols, data).expect("shape is consistent"))
    }

    /// Entrywise exact derivative; same shape.
    pub fn derivative(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(Expr::differentiate).collect(),
        }
    }

    /// Entrywise [`Expr::folded`].
    pub fn folded(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(Expr::folded).collect() }
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.entry(i, j).to_string()).collect())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.entry(j, i).clone())
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| Expr::negation(self.entry(i, j).clone()))
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.same_shape("add", other)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            Expr::sum(self.entry(i, j).clone(), other.entry(i, j).clone())
        }))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        self.same_shape("sub", other)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            Expr::difference(self.entry(i, j).clone(), other.entry(i, j).clone())
        }))
    }

    /// Symbolic product. Exact-zero terms are dropped while summing.
    pub fn mul(&self, other: &Self) -> Result<Self, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::Incompatible { op: "mul", left: self.shape(), right: other.shape() });
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(Expr::Const(0.0), |acc, k| {
                Expr::sum(acc, Expr::product(self.entry(i, k).clone(), other.entry(k, j).clone()))
            })
        }))
    }

    /// Assembles `[[tl, tr], [bl, br]]`.
    pub fn block(tl: &Self, tr: &Self, bl: &Self, br: &Self) -> Result<Self, MatrixError> {
        if tl.rows != tr.rows || bl.rows != br.rows {
            return Err(MatrixError::Incompatible { op: "block rows", left: tl.shape(), right: br.shape() });
        }
        if tl.cols != bl.cols || tr.cols != br.cols {
            return Err(MatrixError::Incompatible { op: "block cols", left: tl.shape(), right: br.shape() });
        }
        let (r1, c1) = tl.shape();
        Ok(Self::from_fn(r1 + bl.rows, c1 + tr.cols, |i, j| {
            match (i < r1, j < c1) {
                (true, true) => tl.entry(i, j),
                (true, false) => tr.entry(i, j - c1),
                (false, true) => bl.entry(i - r1, j),
                (false, false) => br.entry(i - r1, j - c1),
            }
            .clone()
        }))
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &Self) -> Result<Self, MatrixError> {
        if self.cols != below.cols {
            return Err(MatrixError::Incompatible { op: "vstack", left: self.shape(), right: below.shape() });
        }
        Ok(Self::from_fn(self.rows + below.rows, self.cols, |i, j| {
            if i < self.rows {
                self.entry(i, j).clone()
            } else {
                below.entry(i - self.rows, j).clone()
            }
        }))
    }

    /// Determinant by cofactor expansion along the first row. Cost grows
    /// factorially; meant for the small frames used in scenario generation.
    pub fn determinant(&self) -> Result<Expr, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::Incompatible { op: "determinant", left: self.shape(), right: self.shape() });
        }
        let idx: Vec<usize> = (0..self.rows).collect();
        Ok(self.minor_det(&idx, &idx))
    }

    fn minor_det(&self, rows: &[usize], cols: &[usize]) -> Expr {
        if rows.len() == 1 {
            return self.entry(rows[0], cols[0]).clone();
        }
        let sub_rows = &rows[1..];
        let mut acc = Expr::Const(0.0);
        for (k, &c) in cols.iter().enumerate() {
            let a = self.entry(rows[0], c);
            if a.as_const() == Some(0.0) {
                continue;
            }
            let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let term = Expr::product(a.clone(), self.minor_det(sub_rows, &sub_cols));
            acc = if k % 2 == 0 { Expr::sum(acc, term) } else { Expr::difference(acc, term) };
        }
        acc
    }

    /// Symbolic inverse `adj(A) / det(A)`. Evaluation fails where the
    /// determinant vanishes.
    pub fn inverse_by_cofactors(&self) -> Result<Self, MatrixError> {
        let det = self.determinant()?;
        let k = self.rows;
        if k == 1 {
            return Ok(Self::from_fn(1, 1, |_, _| Expr::quotient(Expr::Const(1.0), det.clone())));
        }
        let all: Vec<usize> = (0..k).collect();
        Ok(Self::from_fn(k, k, |i, j| {
            // adj(A)[i][j] = (-1)^(i+j) * det(A without row j and column i)
            let rows: Vec<usize> = all.iter().copied().filter(|&r| r != j).collect();
            let cols: Vec<usize> = all.iter().copied().filter(|&c| c != i).collect();
            let minor = self.minor_det(&rows, &cols);
            let cof = if (i + j) % 2 == 0 { minor } else { Expr::negation(minor) };
            Expr::quotient(cof, det.clone())
        }))
    }

    fn same_shape(&self, op: &'static str, other: &Self) -> Result<(), MatrixError> {
        if self.shape() != other.shape() {
            return Err(MatrixError::Incompatible { op, left: self.shape(), right: other.shape() });
        }
        Ok(())
    }
}
