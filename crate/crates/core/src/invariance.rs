//! The operator `L(M, Q) = dM/dt + MQ − QM`, the three invariance verdicts
//! it supports, and the reduced coefficient matrix `P(t)`.
//!
//! `Φ⁺` is the Moore-Penrose right inverse `Φᵀ(ΦΦᵀ)⁻¹` unless a complement
//! `Φ₂` is supplied, in which case it is the first block of `(Φ; Φ₂)⁻¹`.
//! The two choices give the same `M^{m−n}(t) = ker Φ(t)` but, in general,
//! different `Mⁿ(t)`, so verdicts about `Mⁿ` depend on that choice.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{self, matmul, DenseMatrix, DEFAULT_RANK_TOL};
use crate::matexpr::MatrixFunction;
use crate::Result;

pub const DEFAULT_VERDICT_TOL: f64 = 1e-8;
pub const DEFAULT_GRID_POINTS: usize = 201;

/// `count` evenly spaced points from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| if i + 1 == count { end } else { start + (end - start) * i as f64 / (count - 1) as f64 })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoinverseKind {
    /// First block column of the inverse of `(Φ; Φ₂)`.
    Stacked,
    /// `Φᵀ(ΦΦᵀ)⁻¹`.
    MoorePenrose,
}

/// A system `dy/dt = Q(t)y` together with a frame `Φ(t)` and the grid on
/// which verdicts are sampled.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    m: usize,
    n: usize,
    q: MatrixFunction,
    phi: MatrixFunction,
    phi2: Option<MatrixFunction>,
    dphi: MatrixFunction,
    dphi2: Option<MatrixFunction>,
    t_grid: Vec<f64>,
    rank_tol: f64,
}

impl SystemSpec {
    /// `q` is `m x m`, `phi` is `n x m` with `n < m`, `phi2` (if any) is
    /// `(m − n) x m`. The grid must be non-empty and non-decreasing.
    pub fn new(q: MatrixFunction, phi: MatrixFunction, phi2: Option<MatrixFunction>, t_grid: Vec<f64>) -> Result<Self> {
        let m = q.rows();
        let n = phi.rows();
        if q.cols() != m {
            return Err(Error::InvalidSpec(format!("Q must be square, got {}x{}", q.rows(), q.cols())));
        }
        if phi.cols() != m {
            return Err(Error::InvalidSpec(format!("Φ must have {m} columns, got {}", phi.cols())));
        }
        if n >= m {
            return Err(Error::InvalidSpec(format!("need n < m, got n = {n}, m = {m}")));
        }
        if let Some(p2) = &phi2 {
            if p2.shape() != (m - n, m) {
                return Err(Error::InvalidSpec(format!(
                    "Φ₂ must be {}x{m}, got {}x{}",
                    m - n,
                    p2.rows(),
                    p2.cols()
                )));
            }
        }
        if t_grid.is_empty() {
            return Err(Error::InvalidSpec("empty t-grid".into()));
        }
        if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSpec("t-grid must be finite and non-decreasing".into()));
        }
        let dphi = phi.derivative();
        let dphi2 = phi2.as_ref().map(MatrixFunction::derivative);
        Ok(Self { m, n, q, phi, phi2, dphi, dphi2, t_grid, rank_tol: DEFAULT_RANK_TOL })
    }

    pub fn with_rank_tol(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "rank tolerance must be positive");
        self.rank_tol = tol;
        self
    }

    pub fn with_grid(mut self, t_grid: Vec<f64>) -> Result<Self> {
        let spec = Self::new(self.q, self.phi, self.phi2, t_grid)?;
        self = spec.with_rank_tol(self.rank_tol);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &MatrixFunction {
        &self.q
    }

    pub fn phi(&self) -> &MatrixFunction {
        &self.phi
    }

    pub fn phi2(&self) -> Option<&MatrixFunction> {
        self.phi2.as_ref()
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn pseudoinverse_kind(&self) -> PseudoinverseKind {
        if self.phi2.is_some() {
            PseudoinverseKind::Stacked
        } else {
            PseudoinverseKind::MoorePenrose
        }
    }

    /// Evaluates every pointwise object at `t`. Errors carry `t`.
    pub fn point(&self, t: f64) -> Result<PointEval> {
        self.point_inner(t).map_err(Error::at(t))
    }

    /// `Φ(t)`, `Φ⁺(t)` and `M(t)` without derivatives.
    pub fn frame(&self, t: f64) -> Result<FrameEval> {
        self.frame_inner(t).map_err(Error::at(t))
    }

    fn frame_inner(&self, t: f64) -> Result<FrameEval> {
        let phi = self.phi.eval(t)?;
        let phi_plus = match &self.phi2 {
            Some(phi2) => linalg::stacked_pseudoinverse_with_tol(&phi, &phi2.eval(t)?, self.rank_tol)?.phi1_plus,
            None => linalg::right_pseudoinverse(&phi, self.rank_tol)?,
        };
        let proj = matmul(&phi_plus, &phi)?;
        Ok(FrameEval { phi, phi_plus, proj })
    }

    fn point_inner(&self, t: f64) -> Result<PointEval> {
        let q = self.q.eval(t)?;
        let phi = self.phi.eval(t)?;
        let dphi = self.dphi.eval(t)?;
        let (phi_plus, dphi_plus) = match (&self.phi2, &self.dphi2) {
            (Some(phi2), Some(dphi2)) => {
                let inv = linalg::stacked_pseudoinverse_with_tol(&phi, &phi2.eval(t)?, self.rank_tol)?;
                let dstack = dphi.vstack(&dphi2.eval(t)?)?;
                let inv = inv.phi1_plus.hstack(&inv.phi2_plus)?;
                let dinv = linalg::inverse_derivative(&inv, &dstack)?;
                (inv.column_block(0..self.n), dinv.column_block(0..self.n))
            }
            _ => {
                let plus = linalg::right_pseudoinverse(&phi, self.rank_tol)?;
                let dplus = linalg::right_pseudoinverse_derivative(&phi, &dphi, self.rank_tol)?;
                (plus, dplus)
            }
        };
        let proj = matmul(&phi_plus, &phi)?;
        let dproj = matmul(&dphi_plus, &phi)?.add(&matmul(&phi_plus, &dphi)?)?;
        Ok(PointEval { t, q, phi, dphi, phi_plus, dphi_plus, proj, dproj })
    }
}

#[derive(Debug, Clone)]
pub struct FrameEval {
    pub phi: DenseMatrix,
    pub phi_plus: DenseMatrix,
    pub proj: DenseMatrix,
}

/// Pointwise evaluation of a [`SystemSpec`].
#[derive(Debug, Clone)]
pub struct PointEval {
    pub t: f64,
    pub q: DenseMatrix,
    pub phi: DenseMatrix,
    pub dphi: DenseMatrix,
    pub phi_plus: DenseMatrix,
    pub dphi_plus: DenseMatrix,
    /// `M = Φ⁺Φ`
    pub proj: DenseMatrix,
    /// `dM/dt = (dΦ⁺/dt)Φ + Φ⁺(dΦ/dt)`
    pub dproj: DenseMatrix,
}

impl PointEval {
    pub fn l(&self) -> DenseMatrix {
        l_of(&self.proj, &self.dproj, &self.q)
    }

    /// `P = (dΦ/dt + ΦQ)Φ⁺`
    pub fn reduced(&self) -> DenseMatrix {
        let inner = self.dphi.add(&matmul(&self.phi, &self.q).expect("Φ is n x m")).expect("same shape");
        matmul(&inner, &self.phi_plus).expect("Φ⁺ is m x n")
    }
}

/// `L(M, Q) = dM/dt + MQ − QM` for any square `M` with derivative `dM`.
pub fn l_of(m: &DenseMatrix, dm: &DenseMatrix, q: &DenseMatrix) -> DenseMatrix {
    let mq = matmul(m, q).expect("square operands");
    let qm = matmul(q, m).expect("square operands");
    dm.add(&mq).and_then(|s| s.sub(&qm)).expect("square operands")
}

/// `dM/dt` at `t`, from exact `dΦ/dt` and the closed-form derivative of `Φ⁺`.
pub fn projector_derivative(spec: &SystemSpec, t: f64) -> Result<DenseMatrix> {
    Ok(spec.point(t)?.dproj)
}

pub fn l_operator(spec: &SystemSpec, t: f64) -> Result<DenseMatrix> {
    Ok(spec.point(t)?.l())
}

pub fn reduced_matrix(spec: &SystemSpec, t: f64) -> Result<DenseMatrix> {
    Ok(spec.point(t)?.reduced())
}

/// The three booleans of the invariance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    /// `L = 0`: `Mⁿ` and `M^{m−n}` are both invariant.
    pub joint: bool,
    /// `L M = 0`: `Mⁿ` is invariant.
    pub mn: bool,
    /// `L (E − M) = 0`: `M^{m−n}` lies in `ker L`.
    pub complement: bool,
}

impl Verdicts {
    pub const fn new(joint: bool, mn: bool, complement: bool) -> Self {
        Self { joint, mn, complement }
    }
}

/// Residual curves over the grid plus the verdicts derived from them.
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub tolerance: f64,
    pub pseudoinverse: PseudoinverseKind,
    pub t_grid: Vec<f64>,
    /// `‖L‖_F` per grid point
    pub norm_l: Vec<f64>,
    /// `‖L M‖_F`
    pub norm_lm: Vec<f64>,
    /// `‖L (E − M)‖_F`
    pub norm_l_complement: Vec<f64>,
    /// `‖L Φ⁺‖_F`
    pub norm_l_phi_plus: Vec<f64>,
    pub max_norm_l: f64,
    pub max_norm_lm: f64,
    pub max_norm_l_complement: f64,
    pub max_norm_l_phi_plus: f64,
    /// `max_t ‖Φ‖_F · ‖Φ⁺‖_F`
    pub kappa: f64,
    pub joint_invariant: bool,
    pub mn_invariant: bool,
    pub complement_kernel_condition: bool,
    /// `max_t ‖L Φ⁺‖ ≤ κ·tol`, the same condition stated through `Φ⁺`.
    pub mn_invariant_via_phi_plus: bool,
}

impl InvarianceReport {
    pub fn verdicts(&self) -> Verdicts {
        Verdicts::new(self.joint_invariant, self.mn_invariant, self.complement_kernel_condition)
    }
}

/// Samples `L` on the spec's grid and renders the verdicts at `tol`.
///
/// `L = 0` forces both one-sided products to vanish; when `‖L‖ ≤ tol` the
/// one-sided verdicts are reported as holding even if an oblique `M`
/// (`‖M‖₂ > 1`) pushes `‖LM‖_F` slightly above `tol`.
pub fn verdicts(spec: &SystemSpec, tol: f64) -> Result<InvarianceReport> {
    assert!(tol > 0.0, "verdict tolerance must be positive");
    let k = spec.t_grid.len();
    let mut norm_l = Vec::with_capacity(k);
    let mut norm_lm = Vec::with_capacity(k);
    let mut norm_lc = Vec::with_capacity(k);
    let mut norm_lp = Vec::with_capacity(k);
    let mut kappa: f64 = 0.0;
    let e = DenseMatrix::identity(spec.m);
    for &t in &spec.t_grid {
        let pt = spec.point(t)?;
        let l = pt.l();
        let complement = e.sub(&pt.proj)?;
        norm_l.push(l.frobenius_norm());
        norm_lm.push(matmul(&l, &pt.proj)?.frobenius_norm());
        norm_lc.push(matmul(&l, &complement)?.frobenius_norm());
        norm_lp.push(matmul(&l, &pt.phi_plus)?.frobenius_norm());
        kappa = kappa.max(pt.phi.frobenius_norm() * pt.phi_plus.frobenius_norm());
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (ml, mlm, mlc, mlp) = (max(&norm_l), max(&norm_lm), max(&norm_lc), max(&norm_lp));
    let joint = ml <= tol;
    log::debug!("verdicts: max ‖L‖ = {ml:e}, ‖LM‖ = {mlm:e}, ‖L(E−M)‖ = {mlc:e}");
    Ok(InvarianceReport {
        tolerance: tol,
        pseudoinverse: spec.pseudoinverse_kind(),
        t_grid: spec.t_grid.clone(),
        norm_l,
        norm_lm,
        norm_l_complement: norm_lc,
        norm_l_phi_plus: norm_lp,
        max_norm_l: ml,
        max_norm_lm: mlm,
        max_norm_l_complement: mlc,
        max_norm_l_phi_plus: mlp,
        kappa,
        joint_invariant: joint,
        mn_invariant: joint || mlm <= tol,
        complement_kernel_condition: joint || mlc <= tol,
        mn_invariant_via_phi_plus: mlp <= kappa * tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mf(rows: &[&[&str]]) -> MatrixFunction {
        let grid: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        MatrixFunction::parse(&grid).unwrap()
    }

    fn spec(q: &[&[&str]], phi: &[&str], phi2: Option<&[&str]>) -> SystemSpec {
        SystemSpec::new(mf(q), mf(&[phi]), phi2.map(|r| mf(&[r])), uniform_grid(0.0, 5.0, 201)).unwrap()
    }

    fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
        a.sub(b).unwrap().max_abs() <= tol
    }

    fn fd_projector(s: &SystemSpec, t: f64, h: f64) -> DenseMatrix {
        let a = s.point(t + h).unwrap().proj;
        let b = s.point(t - h).unwrap().proj;
        a.sub(&b).unwrap().scale(0.5 / h)
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = uniform_grid(0.0, 5.0, 201);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[200], 5.0);
        assert_eq!(uniform_grid(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn spec_shape_validation() {
        let q = mf(&[&["0", "1"], &["0", "0"]]);
        assert!(SystemSpec::new(q.clone(), mf(&[&["1", "0", "0"]]), None, vec![0.0]).is_err());
        assert!(SystemSpec::new(q.clone(), mf(&[&["1", "0"], &["0", "1"]]), None, vec![0.0]).is_err());
        assert!(SystemSpec::new(q.clone(), mf(&[&["1", "0"]]), Some(mf(&[&["1", "0", "0"]])), vec![0.0]).is_err());
        assert!(SystemSpec::new(q.clone(), mf(&[&["1", "0"]]), None, vec![]).is_err());
        assert!(SystemSpec::new(q, mf(&[&["1", "0"]]), None, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn constant_frame_has_zero_projector_derivative() {
        let s = spec(&[&["t", "1"], &["0", "2"]], &["1", "2"], None);
        assert_eq!(projector_derivative(&s, 0.7).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rotation_projector_derivative() {
        let s = spec(&[&["0", "0"], &["0", "0"]], &["cos(t)", "sin(t)"], None);
        let d = projector_derivative(&s, 0.0).unwrap();
        assert!(close(&d, &DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]), 1e-15));
        assert!(close(&d, &fd_projector(&s, 0.0, 1e-6), 1e-9));
        // stacked route gives the same answer for an orthonormal complement
        let s2 = spec(&[&["0", "0"], &["0", "0"]], &["cos(t)", "sin(t)"], Some(&["-sin(t)", "cos(t)"]));
        assert!(close(&projector_derivative(&s2, 0.0).unwrap(), &d, 1e-15));
    }

    #[test]
    fn projector_derivative_random_polynomial_both_routes() {
        let q = [&["0", "0", "0"][..], &["0", "0", "0"], &["0", "0", "0"]];
        let s = SystemSpec::new(
            mf(&q),
            mf(&[&["1 + 0.3*t", "0.2*t^2 - 0.1", "0.5"], &["0.1*t", "1", "-0.4*t^3 + 0.2"]]),
            None,
            vec![0.0],
        )
        .unwrap();
        let s2 = SystemSpec::new(
            mf(&q),
            mf(&[&["1 + 0.3*t", "0.2*t^2 - 0.1", "0.5"], &["0.1*t", "1", "-0.4*t^3 + 0.2"]]),
            Some(mf(&[&["0.2*t", "0.1 - t^2*0.05", "1"]])),
            vec![0.0],
        )
        .unwrap();
        for k in 0..20 {
            let t = -1.0 + 2.0 * k as f64 / 19.0;
            for sys in [&s, &s2] {
                let d = projector_derivative(sys, t).unwrap();
                assert!(close(&d, &fd_projector(sys, t, 1e-6), 1e-7), "t={t}");
            }
        }
    }

    #[test]
    fn l_operator_examples() {
        let s = spec(&[&["0.7", "0"], &["0", "-1.3"]], &["1", "0"], None);
        assert_eq!(l_operator(&s, 1.0).unwrap().max_abs(), 0.0);
        let s = spec(&[&["0", "1"], &["0", "0"]], &["1", "0"], None);
        assert_eq!(l_operator(&s, 2.0).unwrap(), DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]));
    }

    #[test]
    fn verdict_examples() {
        let diag = spec(&[&["-1", "0"], &["0", "-2"]], &["1", "0"], None);
        assert_eq!(verdicts(&diag, 1e-8).unwrap().verdicts(), Verdicts::new(true, true, true));
        let upper = spec(&[&["-1", "1"], &["0", "-2"]], &["1", "0"], None);
        let r = verdicts(&upper, 1e-8).unwrap();
        assert_eq!(r.verdicts(), Verdicts::new(false, true, false));
        assert!((r.max_norm_l - 1.0).abs() < 1e-15);
        let lower = spec(&[&["-1", "0"], &["1", "-2"]], &["1", "0"], None);
        assert_eq!(verdicts(&lower, 1e-8).unwrap().verdicts(), Verdicts::new(false, false, true));
    }

    #[test]
    fn reduced_matrix_examples() {
        let s = spec(&[&["0.7", "0"], &["0", "-1.3"]], &["1", "0"], None);
        assert_eq!(reduced_matrix(&s, 0.0).unwrap(), DenseMatrix::from_rows(&[&[0.7]]));
        let s = spec(&[&["0", "1"], &["0", "0"]], &["1", "0"], None);
        assert_eq!(reduced_matrix(&s, 0.0).unwrap(), DenseMatrix::from_rows(&[&[0.0]]));
    }

    #[test]
    fn scalar_shift_leaves_l_unchanged() {
        let base = spec(&[&["sin(t)", "t"], &["1", "cos(t)"]], &["cos(t)", "2 + sin(t)"], None);
        let shifted = spec(&[&["sin(t) + 3.5", "t"], &["1", "cos(t) + 3.5"]], &["cos(t)", "2 + sin(t)"], None);
        for t in [0.0, 0.4, 2.2] {
            let a = l_operator(&base, t).unwrap();
            let b = l_operator(&shifted, t).unwrap();
            assert!(close(&a, &b, 1e-12));
        }
    }

    #[test]
    fn complement_projector_has_opposite_l() {
        let s = spec(&[&["sin(t)", "t"], &["1", "cos(t)"]], &["cos(t)", "2 + sin(t)"], Some(&["t", "1"]));
        for t in [0.1, 1.5] {
            let pt = s.point(t).unwrap();
            let e = DenseMatrix::identity(2);
            let l1 = pt.l();
            let l2 = l_of(&e.sub(&pt.proj).unwrap(), &pt.dproj.scale(-1.0), &pt.q);
            assert!(close(&l1.add(&l2).unwrap(), &DenseMatrix::zeros(2, 2), 1e-12));
        }
    }

    #[test]
    fn rank_deficiency_is_reported_with_time() {
        let s = spec(&[&["0", "0"], &["0", "0"]], &["t", "0"], None);
        let err = l_operator(&s, 0.0).unwrap_err();
        assert!(matches!(err, Error::AtTime { t, .. } if t == 0.0));
        assert!(matches!(err.root(), Error::Linalg(linalg::LinalgError::RankDeficient { .. })));
        assert!(verdicts(&s, 1e-8).is_err());
    }
}
