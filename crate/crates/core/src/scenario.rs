//! Ground-truth systems built by conjugation.
//!
//! With `F = (Φ₁; Φ₂)` and `S = F⁻¹ = (Φ₁⁺, Φ₂⁺)`, the substitution `y = Sz`
//! turns `z' = Kz`, `K = [[A, C], [D, B]]`, into `y' = Qy` with
//! `Q = S'F + SKF = S(KF − F')`. In `z` coordinates `M = diag(E_n, 0)`, so
//! `L = S[M, K]F`: the block structure of `K` fixes the verdicts.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::invariance::{uniform_grid, SystemSpec, Verdicts, DEFAULT_GRID_POINTS};
use crate::linalg::{self, matmul, DenseMatrix};
use crate::matexpr::{Expr, MatrixFunction, UnaryOp};
use crate::Result;

/// Couplings with max-grid Frobenius norm at or below this are rejected.
pub const COUPLING_FLOOR: f64 = 1e-6;

/// Largest `m` for which a general frame is inverted symbolically.
pub const MAX_COFACTOR_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    BlockDiagonal,
    /// `D = 0`
    UpperTriangular,
    /// `C = 0`
    LowerTriangular,
    Full,
}

impl Structure {
    pub const ALL: [Structure; 4] =
        [Structure::BlockDiagonal, Structure::UpperTriangular, Structure::LowerTriangular, Structure::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::BlockDiagonal => "block_diagonal",
            Structure::UpperTriangular => "upper_triangular",
            Structure::LowerTriangular => "lower_triangular",
            Structure::Full => "full",
        }
    }

    /// Whether `(C, D)` are nonzero.
    fn couplings(self) -> (bool, bool) {
        match self {
            Structure::BlockDiagonal => (false, false),
            Structure::UpperTriangular => (true, false),
            Structure::LowerTriangular => (false, true),
            Structure::Full => (true, true),
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Structure::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown structure {s:?}")))
    }
}

/// Blocks of `K = [[A, C], [D, B]]`: `A` is `n x n`, `B` is `p x p`,
/// `C` is `n x p`, `D` is `p x n`.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub a: MatrixFunction,
    pub b: MatrixFunction,
    pub c: MatrixFunction,
    pub d: MatrixFunction,
}

impl Blocks {
    pub fn k(&self) -> Result<MatrixFunction> {
        Ok(MatrixFunction::block(&self.a, &self.c, &self.d, &self.b)?)
    }
}

/// `F = U(t)R(t)` with `U` unit upper triangular and `R` a rotation by
/// `ωt + φ` in the coordinate plane `(i, j)`.
#[derive(Debug, Clone)]
struct RotatedFrame {
    u: MatrixFunction,
    u_inv: MatrixFunction,
    r: MatrixFunction,
    plane: (usize, usize),
    omega: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    phi1: MatrixFunction,
    phi2: MatrixFunction,
    dphi1: MatrixFunction,
    dphi2: MatrixFunction,
    blocks: Blocks,
    structure: Structure,
    t_grid: Vec<f64>,
    rotated: Option<RotatedFrame>,
}

impl ScenarioSpec {
    /// Validates shapes, nonsingularity of the stack on `t_grid`, and that
    /// `structure` agrees with which couplings vanish on the grid.
    pub fn new(
        phi1: MatrixFunction,
        phi2: MatrixFunction,
        blocks: Blocks,
        structure: Structure,
        t_grid: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = phi1.shape();
        let p = phi2.rows();
        if phi2.cols() != m || n + p != m || n == 0 || p == 0 {
            return Err(Error::InvalidSpec(format!(
                "frame blocks {:?} and {:?} do not stack to a square matrix",
                phi1.shape(),
                phi2.shape()
            )));
        }
        for (name, block, shape) in [
            ("A", &blocks.a, (n, n)),
            ("B", &blocks.b, (p, p)),
            ("C", &blocks.c, (n, p)),
            ("D", &blocks.d, (p, n)),
        ] {
            if block.shape() != shape {
                return Err(Error::InvalidSpec(format!("block {name} is {:?}, expected {shape:?}", block.shape())));
            }
        }
        if t_grid.is_empty() {
            return Err(Error::InvalidSpec("empty t-grid".into()));
        }
        let spec = Self {
            dphi1: phi1.derivative(),
            dphi2: phi2.derivative(),
            phi1,
            phi2,
            blocks,
            structure,
            t_grid,
            rotated: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        for &t in &self.t_grid {
            linalg::stacked_pseudoinverse(&self.phi1.eval(t)?, &self.phi2.eval(t)?).map_err(|e| Error::at(t)(e.into()))?;
        }
        let (want_c, want_d) = self.structure.couplings();
        for (name, block, want) in [("C", &self.blocks.c, want_c), ("D", &self.blocks.d, want_d)] {
            let norm = grid_norm(block, &self.t_grid)?;
            match (want, norm) {
                (false, x) if x > 0.0 => {
                    return Err(Error::InvalidSpec(format!(
                        "{} requires {name} = 0, but max-grid ‖{name}‖ = {x:e}",
                        self.structure
                    )))
                }
                (true, x) if x <= COUPLING_FLOOR => {
                    return Err(Error::InvalidSpec(format!(
                        "{} requires {name} ≢ 0, but max-grid ‖{name}‖ = {x:e} ≤ {COUPLING_FLOOR:e}",
                        self.structure
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.phi1.cols()
    }

    pub fn n(&self) -> usize {
        self.phi1.rows()
    }

    pub fn phi1(&self) -> &MatrixFunction {
        &self.phi1
    }

    pub fn phi2(&self) -> &MatrixFunction {
        &self.phi2
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn expected_verdicts(&self) -> Verdicts {
        expected_verdicts(self.structure)
    }

    /// `S(t) = F(t)⁻¹`.
    pub fn frame_inverse(&self, t: f64) -> Result<DenseMatrix> {
        let inner = || -> Result<DenseMatrix> {
            let pair = linalg::stacked_pseudoinverse(&self.phi1.eval(t)?, &self.phi2.eval(t)?)?;
            Ok(pair.phi1_plus.hstack(&pair.phi2_plus)?)
        };
        inner().map_err(Error::at(t))
    }

    /// `Q(t) = S'(t)F(t) + S(t)K(t)F(t)`, with `S'` from the derivative of
    /// the stacked inverse.
    pub fn generate_q(&self, t: f64) -> Result<DenseMatrix> {
        let inner = || -> Result<DenseMatrix> {
            let (phi1, phi2) = (self.phi1.eval(t)?, self.phi2.eval(t)?);
            let pair = linalg::stacked_pseudoinverse(&phi1, &phi2)?;
            let s = pair.phi1_plus.hstack(&pair.phi2_plus)?;
            let f = phi1.vstack(&phi2)?;
            let df = self.dphi1.eval(t)?.vstack(&self.dphi2.eval(t)?)?;
            let ds = linalg::inverse_derivative(&s, &df)?;
            let k = self.blocks.k()?.eval(t)?;
            Ok(matmul(&ds, &f)?.add(&matmul(&matmul(&s, &k)?, &f)?)?)
        };
        inner().map_err(Error::at(t))
    }

    /// `Q` as expressions, suitable for writing to a config.
    pub fn q_function(&self) -> Result<MatrixFunction> {
        let k = self.blocks.k()?;
        match &self.rotated {
            // Q = Rᵀ U⁻¹ (KU − U') R − ωG, G the plane generator
            Some(rf) => {
                let inner = rf.u_inv.mul(&k.mul(&rf.u)?.sub(&rf.u.derivative().folded())?)?;
                let q = rf.r.transpose().mul(&inner)?.mul(&rf.r)?;
                let (i, j) = rf.plane;
                let m = self.m();
                let shift = MatrixFunction::from_fn(m, m, |r, c| match (r, c) {
                    (r, c) if (r, c) == (i, j) => Expr::Const(rf.omega),
                    (r, c) if (r, c) == (j, i) => Expr::Const(-rf.omega),
                    _ => Expr::Const(0.0),
                });
                Ok(q.add(&shift)?.folded())
            }
            None => {
                let m = self.m();
                if m > MAX_COFACTOR_DIM {
                    return Err(Error::Precondition(format!(
                        "symbolic inverse of a general {m}x{m} frame is not supported (limit {MAX_COFACTOR_DIM})"
                    )));
                }
                let f = self.phi1.vstack(&self.phi2)?;
                let s = f.inverse_by_cofactors()?;
                Ok(s.mul(&k.mul(&f)?.sub(&f.derivative().folded())?)?.folded())
            }
        }
    }

    /// The generated system with the stacked pseudoinverse and this grid.
    pub fn to_system_spec(&self) -> Result<SystemSpec> {
        SystemSpec::new(self.q_function()?, self.phi1.clone(), Some(self.phi2.clone()), self.t_grid.clone())
    }
}

/// Structure → `(joint, mn, complement)`.
pub fn expected_verdicts(structure: Structure) -> Verdicts {
    match structure {
        Structure::BlockDiagonal => Verdicts::new(true, true, true),
        Structure::UpperTriangular => Verdicts::new(false, true, false),
        Structure::LowerTriangular => Verdicts::new(false, false, true),
        Structure::Full => Verdicts::new(false, false, false),
    }
}

fn grid_norm(f: &MatrixFunction, grid: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in grid {
        worst = worst.max(f.eval(t).map_err(|e| Error::at(t)(e.into()))?.frobenius_norm());
    }
    Ok(worst)
}

fn r3(x: f64) -> f64 {
    let r = (x * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    r3(rng.random_range(lo..hi))
}

fn affine(a: f64, b: f64) -> Expr {
    Expr::sum(Expr::Const(a), Expr::product(Expr::Const(b), Expr::Var))
}

/// Entry `c + s·sin(t)` with probability 1/4, else `c`.
fn wobble(rng: &mut impl Rng, c: f64) -> Expr {
    if rng.random_bool(0.25) {
        let s = uniform(rng, -0.1, 0.1);
        Expr::sum(Expr::Const(c), Expr::product(Expr::Const(s), Expr::unary(UnaryOp::Sin, Expr::Var)))
    } else {
        Expr::Const(c)
    }
}

fn random_diagonal_block(rng: &mut impl Rng, k: usize) -> MatrixFunction {
    let mut draw = |i: usize, j: usize| {
        let c = if i == j { uniform(rng, -0.6, 0.2) } else { uniform(rng, -0.3, 0.3) };
        wobble(rng, c)
    };
    let mut entries = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            entries.push(draw(i, j));
        }
    }
    MatrixFunction::new(k, k, entries).expect("k*k entries")
}

fn random_coupling(rng: &mut impl Rng, rows: usize, cols: usize, present: bool) -> MatrixFunction {
    if !present {
        return MatrixFunction::zeros(rows, cols);
    }
    MatrixFunction::from_fn(rows, cols, |_, _| {
        let mag = uniform(rng, 0.5, 1.0);
        Expr::Const(if rng.random_bool(0.5) { mag } else { -mag })
    })
}

/// `U = E + N`, `N` strictly upper triangular with affine entries, and its
/// exact inverse `Σ (−N)^k`.
fn random_unipotent(rng: &mut impl Rng, m: usize) -> (MatrixFunction, MatrixFunction) {
    let mut entries = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            entries.push(if j > i { affine(uniform(rng, -0.3, 0.3), uniform(rng, -0.08, 0.08)) } else { Expr::Const(0.0) });
        }
    }
    let n = MatrixFunction::new(m, m, entries).expect("m*m entries");
    let u = MatrixFunction::identity(m).add(&n).expect("same shape");
    let neg = n.neg();
    let mut inv = MatrixFunction::identity(m);
    let mut power = MatrixFunction::identity(m);
    for _ in 1..m {
        power = power.mul(&neg).expect("square");
        inv = inv.add(&power).expect("same shape");
    }
    (u, inv)
}

fn plane_rotation(m: usize, (i, j): (usize, usize), omega: f64, phase: f64) -> MatrixFunction {
    let theta = affine(phase, omega);
    let cos = Expr::unary(UnaryOp::Cos, theta.clone());
    let sin = Expr::unary(UnaryOp::Sin, theta);
    MatrixFunction::from_fn(m, m, |r, c| match (r, c) {
        _ if (r, c) == (i, i) || (r, c) == (j, j) => cos.clone(),
        _ if (r, c) == (i, j) => Expr::negation(sin.clone()),
        _ if (r, c) == (j, i) => sin.clone(),
        _ if r == c => Expr::Const(1.0),
        _ => Expr::Const(0.0),
    })
}

/// A random scenario of the given structure with `m x m` state and an
/// `n`-dimensional `Mⁿ`, on `t_grid`.
pub fn random_scenario(
    structure: Structure,
    m: usize,
    n: usize,
    rng: &mut impl Rng,
    t_grid: Vec<f64>,
) -> Result<ScenarioSpec> {
    if !(1..m).contains(&n) {
        return Err(Error::InvalidSpec(format!("need 0 < n < m, got n = {n}, m = {m}")));
    }
    let p = m - n;
    let (u, u_inv) = random_unipotent(rng, m);
    let i = rng.random_range(0..m);
    let j = (i + rng.random_range(1..m)) % m;
    let omega = uniform(rng, -0.8, 0.8);
    let phase = uniform(rng, 0.0, TAU);
    let r = plane_rotation(m, (i, j), omega, phase);
    let f = u.mul(&r)?;
    let rows = f.to_strings();
    let phi1 = MatrixFunction::parse(&rows[..n])?;
    let phi2 = MatrixFunction::parse(&rows[n..])?;
    let (want_c, want_d) = structure.couplings();
    let blocks = Blocks {
        a: random_diagonal_block(rng, n),
        b: random_diagonal_block(rng, p),
        c: random_coupling(rng, n, p, want_c),
        d: random_coupling(rng, p, n, want_d),
    };
    let mut spec = ScenarioSpec::new(phi1, phi2, blocks, structure, t_grid)?;
    spec.rotated = Some(RotatedFrame { u, u_inv, r, plane: (i, j), omega });
    Ok(spec)
}

/// Deterministic scenario for `(structure, seed)`: `m ∈ {2, 3, 4}`, grid of
/// 201 points on `[0, 5]`.
pub fn generate(structure: Structure, seed: u64) -> Result<ScenarioSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=4);
    let n = rng.random_range(1..m);
    random_scenario(structure, m, n, &mut rng, uniform_grid(0.0, 5.0, DEFAULT_GRID_POINTS))
}

/// A well-conditioned numeric stack: a random orthogonal matrix plus a
/// perturbation of size `0.1`, split after row `n`.
pub fn random_stack(m: usize, n: usize, rng: &mut impl Rng) -> (DenseMatrix, DenseMatrix) {
    assert!(0 < n && n < m, "need 0 < n < m");
    let q = random_orthogonal(m, rng);
    let noise: Vec<f64> = (0..m * m).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let f = q.add(&DenseMatrix::from_row_major(m, m, noise).expect("m*m entries")).expect("same shape");
    (f.row_block(0..n), f.row_block(n..m))
}

fn random_orthogonal(m: usize, rng: &mut impl Rng) -> DenseMatrix {
    loop {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
        for _ in 0..m {
            let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            for u in &rows {
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = linalg::norm2(&v);
            if norm < 1e-6 {
                break;
            }
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
        if rows.len() == m {
            return DenseMatrix::from_row_major(m, m, rows.concat()).expect("m*m entries");
        }
    }
}
