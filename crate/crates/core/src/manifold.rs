//! Projector frames `M₁ = Φ₁⁺Φ₁`, `M₂ = Φ₂⁺Φ₂` at a fixed time, the four
//! subspaces they cut out of ℝᵐ, and sampled checks of the kernel
//! identities and of the parametrization `y = Φ₁⁺ x` of `Mⁿ(t)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Error;
use crate::linalg::{self, matmul, norm2, DenseMatrix, LinalgError, DEFAULT_RANK_TOL};
use crate::matexpr::MatrixFunction;
use crate::Result;

/// Largest identity residual accepted when a frame is constructed.
pub const FRAME_IDENTITY_LIMIT: f64 = 1e-9;

/// Default relative tolerance for subspace membership.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-8;

/// Default absolute tolerance for the sampled kernel and image checks.
pub const DEFAULT_LEMMA_TOL: f64 = 1e-9;

/// Everything derived from a nonsingular stack `(Φ₁; Φ₂)` at one instant.
#[derive(Debug, Clone)]
pub struct ProjectorFrame {
    pub t: f64,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub phi1: DenseMatrix,
    pub phi2: DenseMatrix,
    pub phi1_plus: DenseMatrix,
    pub phi2_plus: DenseMatrix,
    pub m1: DenseMatrix,
    pub m2: DenseMatrix,
}

/// Frobenius residuals of the projector identities, plus both ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectorIdentities {
    /// `‖M₁² − M₁‖`
    pub idempotent_m1: f64,
    /// `‖M₂² − M₂‖`
    pub idempotent_m2: f64,
    /// `max(‖M₁M₂‖, ‖M₂M₁‖)`
    pub annihilation: f64,
    /// `‖M₁ + M₂ − E‖`
    pub complementarity: f64,
    pub rank_m1: usize,
    pub rank_m2: usize,
}

impl ProjectorIdentities {
    pub fn max_residual(&self) -> f64 {
        self.idempotent_m1
            .max(self.idempotent_m2)
            .max(self.annihilation)
            .max(self.complementarity)
    }
}

/// Builds the frame at `t` from symbolic `Φ₁` (`n x m`) and `Φ₂` (`p x m`).
pub fn build_frame(phi1: &MatrixFunction, phi2: &MatrixFunction, t: f64) -> Result<ProjectorFrame> {
    let a = phi1.eval(t).map_err(|e| Error::at(t)(e.into()))?;
    let b = phi2.eval(t).map_err(|e| Error::at(t)(e.into()))?;
    ProjectorFrame::from_matrices(t, a, b, DEFAULT_RANK_TOL).map_err(Error::at(t))
}

impl ProjectorFrame {
    /// Inverts the stack, forms `M₁`, `M₂` and verifies every projector
    /// identity. Fails if a residual exceeds [`FRAME_IDENTITY_LIMIT`] or a
    /// rank is wrong.
    pub fn from_matrices(t: f64, phi1: DenseMatrix, phi2: DenseMatrix, rank_tol: f64) -> Result<Self> {
        let pair = linalg::stacked_pseudoinverse_with_tol(&phi1, &phi2, rank_tol)?;
        let m1 = matmul(&pair.phi1_plus, &phi1)?;
        let m2 = matmul(&pair.phi2_plus, &phi2)?;
        let frame = Self {
            t,
            m: phi1.cols(),
            n: phi1.rows(),
            p: phi2.rows(),
            phi1,
            phi2,
            phi1_plus: pair.phi1_plus,
            phi2_plus: pair.phi2_plus,
            m1,
            m2,
        };
        let ids = frame.identities(rank_tol);
        let checks = [
            ("M₁² = M₁", ids.idempotent_m1),
            ("M₂² = M₂", ids.idempotent_m2),
            ("M₁M₂ = M₂M₁ = 0", ids.annihilation),
            ("M₁ + M₂ = E", ids.complementarity),
        ];
        for (identity, residual) in checks {
            if residual.is_nan() || residual > FRAME_IDENTITY_LIMIT {
                return Err(Error::IdentityViolation { identity, residual, limit: FRAME_IDENTITY_LIMIT });
            }
        }
        if ids.rank_m1 != frame.n {
            return Err(LinalgError::RankDeficient { expected: frame.n, found: ids.rank_m1 }.into());
        }
        if ids.rank_m2 != frame.p {
            return Err(LinalgError::RankDeficient { expected: frame.p, found: ids.rank_m2 }.into());
        }
        Ok(frame)
    }

    pub fn identities(&self, rank_tol: f64) -> ProjectorIdentities {
        let e = DenseMatrix::identity(self.m);
        let mm = |a: &DenseMatrix, b: &DenseMatrix| matmul(a, b).expect("square frame blocks");
        let resid = |a: DenseMatrix, b: &DenseMatrix| a.sub(b).expect("same shape").frobenius_norm();
        ProjectorIdentities {
            idempotent_m1: resid(mm(&self.m1, &self.m1), &self.m1),
            idempotent_m2: resid(mm(&self.m2, &self.m2), &self.m2),
            annihilation: mm(&self.m1, &self.m2)
                .frobenius_norm()
                .max(mm(&self.m2, &self.m1).frobenius_norm()),
            complementarity: resid(self.m1.add(&self.m2).expect("same shape"), &e),
            rank_m1: linalg::rank(&self.m1, rank_tol),
            rank_m2: linalg::rank(&self.m2, rank_tol),
        }
    }
}

/// Which of the four subspaces a membership query targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SubspaceKind {
    /// `Mⁿ(t) = {y : y = M₁y}`
    Mn,
    /// `M^{m−n}(t) = {y : M₁y = 0}`
    Mmn,
    /// `M₁ᵖ(t) = {y : y = M₂y}`
    M1p,
    /// `M₁^{m−p}(t) = {y : M₂y = 0}`
    M1mp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceQuery {
    pub kind: SubspaceKind,
    pub tolerance: f64,
}

impl SubspaceQuery {
    pub fn new(kind: SubspaceKind) -> Self {
        Self { kind, tolerance: DEFAULT_MEMBERSHIP_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// Absolute residual `‖y − My‖` or `‖My‖`.
    pub residual: f64,
}

/// Residual test `residual ≤ tol·‖y‖`; the zero vector belongs to every
/// subspace.
pub fn membership(y: &[f64], frame: &ProjectorFrame, q: SubspaceQuery) -> Result<Membership, LinalgError> {
    assert!(q.tolerance > 0.0, "membership tolerance must be positive");
    let (proj, complement) = match q.kind {
        SubspaceKind::Mn => (&frame.m1, true),
        SubspaceKind::Mmn => (&frame.m1, false),
        SubspaceKind::M1p => (&frame.m2, true),
        SubspaceKind::M1mp => (&frame.m2, false),
    };
    let py = proj.matvec(y)?;
    let residual = if complement {
        norm2(&y.iter().zip(&py).map(|(a, b)| a - b).collect::<Vec<_>>())
    } else {
        norm2(&py)
    };
    Ok(Membership { member: residual <= q.tolerance * norm2(y), residual })
}

fn normal_vector(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn residual(a: &[f64], b: &[f64]) -> f64 {
    norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Maximum residuals of the kernel identities over random samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub samples: usize,
    pub tolerance: f64,
    /// `max ‖Φ₂ y‖` over `y = M₁c`
    pub phi2_on_mn: f64,
    /// `max ‖M₂ y‖` over `y = M₁c`
    pub m2_on_mn: f64,
    /// `max ‖Φ₁ y‖` over `y = M₂c`
    pub phi1_on_kernel: f64,
    /// `max ‖y − M₂y‖` over `y = M₂c`
    pub m1p_membership: f64,
    pub passed: bool,
}

impl Lemma1Report {
    pub fn max_residual(&self) -> f64 {
        self.phi2_on_mn.max(self.m2_on_mn).max(self.phi1_on_kernel).max(self.m1p_membership)
    }
}

/// Samples `y = M₁c` and checks `Mⁿ = M₁^{m−p} = ker Φ₂`; samples `y = M₂c`
/// and checks `M^{m−n} = M₁ᵖ = ker Φ₁`.
pub fn check_lemma1(frame: &ProjectorFrame, samples: usize, tol: f64, rng: &mut impl Rng) -> Lemma1Report {
    assert!(samples >= 1, "at least one sample is required");
    let mv = |a: &DenseMatrix, v: &[f64]| a.matvec(v).expect("frame shapes are consistent");
    let mut r = Lemma1Report {
        samples,
        tolerance: tol,
        phi2_on_mn: 0.0,
        m2_on_mn: 0.0,
        phi1_on_kernel: 0.0,
        m1p_membership: 0.0,
        passed: false,
    };
    for _ in 0..samples {
        let c = normal_vector(rng, frame.m);
        let y = mv(&frame.m1, &c);
        r.phi2_on_mn = r.phi2_on_mn.max(norm2(&mv(&frame.phi2, &y)));
        r.m2_on_mn = r.m2_on_mn.max(norm2(&mv(&frame.m2, &y)));

        let c = normal_vector(rng, frame.m);
        let y = mv(&frame.m2, &c);
        r.phi1_on_kernel = r.phi1_on_kernel.max(norm2(&mv(&frame.phi1, &y)));
        r.m1p_membership = r.m1p_membership.max(residual(&y, &mv(&frame.m2, &y)));
    }
    r.passed = r.max_residual() <= tol;
    r
}

/// Checks that `Φ₁⁺` maps ℝⁿ injectively onto `Mⁿ(t)` and `Φ₂⁺` maps ℝᵖ
/// injectively onto `M^{m−n}(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma2Report {
    pub samples: usize,
    pub tolerance: f64,
    pub rank_phi1_plus: usize,
    /// `‖M₁Φ₁⁺ − Φ₁⁺‖`
    pub image_residual: f64,
    /// `max ‖y − Φ₁⁺(Φ₁y)‖` over `y = M₁c`
    pub surjectivity_residual: f64,
    pub rank_phi2_plus: usize,
    /// `‖M₂Φ₂⁺ − Φ₂⁺‖`
    pub complement_image_residual: f64,
    /// `max ‖y − Φ₂⁺(Φ₂y)‖` over `y = M₂c`
    pub complement_surjectivity_residual: f64,
    pub passed: bool,
}

impl Lemma2Report {
    pub fn max_residual(&self) -> f64 {
        self.image_residual
            .max(self.surjectivity_residual)
            .max(self.complement_image_residual)
            .max(self.complement_surjectivity_residual)
    }
}

pub fn check_lemma2(frame: &ProjectorFrame, samples: usize, tol: f64, rng: &mut impl Rng) -> Lemma2Report {
    assert!(samples >= 1, "at least one sample is required");
    let mm = |a: &DenseMatrix, b: &DenseMatrix| matmul(a, b).expect("frame shapes are consistent");
    let mv = |a: &DenseMatrix, v: &[f64]| a.matvec(v).expect("frame shapes are consistent");
    let image = |proj: &DenseMatrix, plus: &DenseMatrix| mm(proj, plus).sub(plus).expect("same shape").frobenius_norm();

    let mut r = Lemma2Report {
        samples,
        tolerance: tol,
        rank_phi1_plus: linalg::rank(&frame.phi1_plus, DEFAULT_RANK_TOL),
        image_residual: image(&frame.m1, &frame.phi1_plus),
        surjectivity_residual: 0.0,
        rank_phi2_plus: linalg::rank(&frame.phi2_plus, DEFAULT_RANK_TOL),
        complement_image_residual: image(&frame.m2, &frame.phi2_plus),
        complement_surjectivity_residual: 0.0,
        passed: false,
    };
    for _ in 0..samples {
        let c = normal_vector(rng, frame.m);
        let y = mv(&frame.m1, &c);
        let back = mv(&frame.phi1_plus, &mv(&frame.phi1, &y));
        r.surjectivity_residual = r.surjectivity_residual.max(residual(&y, &back));

        let c = normal_vector(rng, frame.m);
        let y = mv(&frame.m2, &c);
        let back = mv(&frame.phi2_plus, &mv(&frame.phi2, &y));
        r.complement_surjectivity_residual = r.complement_surjectivity_residual.max(residual(&y, &back));
    }
    r.passed = r.rank_phi1_plus == frame.n && r.rank_phi2_plus == frame.p && r.max_residual() <= tol;
    r
}
