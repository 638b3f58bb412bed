//! Fixed-step RK4 for fundamental matrices, manifold drift, and the
//! conjugacy relations between the full flow `Y` and the reduced flow `X`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::invariance::{self, SystemSpec};
use crate::linalg::{matmul, norm2, DenseMatrix};
use crate::matexpr::MatrixFunction;
use crate::Result;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_WINDOW: (f64, f64) = (0.0, 5.0);
pub const DEFAULT_TRIALS: usize = 8;
pub const DEFAULT_SEED: u64 = 42;

/// Samples of a fundamental matrix, one per RK4 step including both ends.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalSamples {
    pub t: Vec<f64>,
    pub y: Vec<DenseMatrix>,
}

impl FundamentalSamples {
    pub fn last(&self) -> &DenseMatrix {
        self.y.last().expect("at least one sample")
    }
}

/// Number of uniform steps covering `[t0, t1]` with step at most `h`.
pub fn step_count(t0: f64, t1: f64, h: f64) -> usize {
    let ratio = (t1 - t0).abs() / h;
    // absorb rounding in ratios such as 1.0 / 1e-3
    (ratio - 1e-9 * ratio.max(1.0)).ceil().max(0.0) as usize
}

/// Fundamental matrix of `dY/dt = A(t)Y`, `Y(t0) = E`, by classical RK4.
/// The actual step is `(t1 − t0)/N` with `N = ceil(|t1 − t0|/h)`; `t1 < t0`
/// steps backwards.
pub fn integrate_fundamental(a: &MatrixFunction, t0: f64, t1: f64, h: f64) -> Result<FundamentalSamples> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidSpec(format!("coefficient matrix must be square, got {}x{}", a.rows(), a.cols())));
    }
    integrate_fundamental_with(a.rows(), t0, t1, h, |t| a.eval(t).map_err(Error::from))
}

/// As [`integrate_fundamental`] with the coefficient supplied by a closure.
pub fn integrate_fundamental_with<F>(k: usize, t0: f64, t1: f64, h: f64, mut coeff: F) -> Result<FundamentalSamples>
where
    F: FnMut(f64) -> Result<DenseMatrix>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Precondition(format!("step must be positive and finite, got {h}")));
    }
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Precondition("integration window must be finite".into()));
    }
    let steps = step_count(t0, t1, h);
    let dt = if steps == 0 { 0.0 } else { (t1 - t0) / steps as f64 };
    let time = |i: usize| if i == steps { t1 } else { t0 + dt * i as f64 };

    let mut eval = |t: f64| -> Result<DenseMatrix> {
        let a = coeff(t).map_err(Error::at(t))?;
        if a.shape() != (k, k) {
            return Err(Error::InvalidSpec(format!("coefficient at t = {t} is {:?}, expected {k}x{k}", a.shape())));
        }
        Ok(a)
    };

    let mut ts = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);
    let mut y = DenseMatrix::identity(k);
    ts.push(t0);
    ys.push(y.clone());
    if steps == 0 {
        return Ok(FundamentalSamples { t: ts, y: ys });
    }

    let mut a0 = eval(t0)?;
    for i in 0..steps {
        let t = time(i);
        let t_next = time(i + 1);
        let a_mid = eval(t + 0.5 * dt)?;
        let a1 = eval(t_next)?;
        let k1 = matmul(&a0, &y)?;
        let k2 = matmul(&a_mid, &shifted(&y, 0.5 * dt, &k1))?;
        let k3 = matmul(&a_mid, &shifted(&y, 0.5 * dt, &k2))?;
        let k4 = matmul(&a1, &shifted(&y, dt, &k3))?;
        y.axpy(dt / 6.0, &k1);
        y.axpy(dt / 3.0, &k2);
        y.axpy(dt / 3.0, &k3);
        y.axpy(dt / 6.0, &k4);
        if !y.is_finite() {
            return Err(Error::NonFiniteState { step: i + 1, t: t_next });
        }
        ts.push(t_next);
        ys.push(y.clone());
        a0 = a1;
    }
    Ok(FundamentalSamples { t: ts, y: ys })
}

fn shifted(y: &DenseMatrix, s: f64, k: &DenseMatrix) -> DenseMatrix {
    let mut out = y.clone();
    out.axpy(s, k);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Launch in `Mⁿ(t0)`, measure `‖(E − M)y‖ / ‖y‖`.
    Mn,
    /// Launch in `M^{m−n}(t0)`, measure `‖My‖ / ‖y‖`.
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub t0: f64,
    pub t1: f64,
    pub step: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { t0: DEFAULT_WINDOW.0, t1: DEFAULT_WINDOW.1, step: DEFAULT_STEP, trials: DEFAULT_TRIALS, seed: DEFAULT_SEED }
    }
}

impl FlowOptions {
    pub fn window(mut self, t0: f64, t1: f64) -> Self {
        self.t0 = t0;
        self.t1 = t1;
        self
    }

    pub fn step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }

    pub fn trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn random_vectors(&self, m: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.trials).map(|_| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }
}

/// Per-sample drift, maximised over trials.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCurve {
    pub side: Side,
    pub seed: u64,
    pub trials: usize,
    pub t: Vec<f64>,
    pub drift: Vec<f64>,
    pub max: f64,
}

/// Drift of trajectories launched on `side` from random standard-normal
/// vectors `c` projected onto that side at `t0`.
pub fn manifold_drift(spec: &SystemSpec, side: Side, opts: &FlowOptions) -> Result<DriftCurve> {
    if opts.trials == 0 {
        return Err(Error::Precondition("at least one trial is required".into()));
    }
    manifold_drift_from(spec, side, &opts.random_vectors(spec.m()), opts)
}

/// Drift for caller-supplied vectors `c`, each projected onto `side` at `t0`.
pub fn manifold_drift_from(spec: &SystemSpec, side: Side, cs: &[Vec<f64>], opts: &FlowOptions) -> Result<DriftCurve> {
    let fund = integrate_system(spec, opts)?;
    let projs = projectors(spec, &fund.t)?;
    let drift = drift_curve(&fund, &projs, side, cs)?;
    let max = drift.iter().copied().fold(0.0, f64::max);
    Ok(DriftCurve { side, seed: opts.seed, trials: cs.len(), t: fund.t, drift, max })
}

fn integrate_system(spec: &SystemSpec, opts: &FlowOptions) -> Result<FundamentalSamples> {
    integrate_fundamental_with(spec.m(), opts.t0, opts.t1, opts.step, |t| spec.q().eval(t).map_err(Error::from))
}

fn projectors(spec: &SystemSpec, ts: &[f64]) -> Result<Vec<DenseMatrix>> {
    ts.iter().map(|&t| spec.frame(t).map(|f| f.proj)).collect()
}

fn drift_curve(fund: &FundamentalSamples, projs: &[DenseMatrix], side: Side, cs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = fund.y[0].rows();
    let e = DenseMatrix::identity(m);
    let launch = match side {
        Side::Mn => projs[0].clone(),
        Side::Complement => e.sub(&projs[0])?,
    };
    let y0s = cs
        .iter()
        .map(|c| {
            if c.len() != m {
                return Err(Error::Precondition(format!("trial vector has length {}, expected {m}", c.len())));
            }
            Ok(launch.matvec(c)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(fund.t.len());
    for (y, proj) in fund.y.iter().zip(projs) {
        let mut worst: f64 = 0.0;
        for y0 in &y0s {
            let yt = y.matvec(y0)?;
            let on = proj.matvec(&yt)?;
            let off = match side {
                Side::Mn => yt.iter().zip(&on).map(|(a, b)| a - b).collect::<Vec<_>>(),
                Side::Complement => on,
            };
            let size = norm2(&yt);
            if size > 0.0 {
                worst = worst.max(norm2(&off) / size);
            }
        }
        out.push(worst);
    }
    Ok(out)
}

/// Residuals of `Y(t)Φ⁺(t0) = Φ⁺(t)X(t)` and `X(t) = Φ(t)Y(t)Φ⁺(t0)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyReport {
    pub t: Vec<f64>,
    /// `‖Y(t)Φ⁺(t0) − Φ⁺(t)X(t)‖_F`
    pub lift_residual: Vec<f64>,
    /// `‖X(t) − Φ(t)Y(t)Φ⁺(t0)‖_F`
    pub projection_residual: Vec<f64>,
    pub max_lift_residual: f64,
    pub max_projection_residual: f64,
}

struct Conjugacy {
    report: ConjugacyReport,
    y: FundamentalSamples,
    x: Vec<DenseMatrix>,
    projs: Vec<DenseMatrix>,
}

/// Conjugacy residuals, refusing specs whose `Mⁿ` verdict fails at `tol`
/// on the spec's grid.
pub fn conjugacy_check(spec: &SystemSpec, opts: &FlowOptions, tol: f64) -> Result<ConjugacyReport> {
    let report = invariance::verdicts(spec, tol)?;
    if !report.mn_invariant {
        return Err(Error::Precondition(format!(
            "Mⁿ is not invariant (max ‖LM‖ = {:e} > {tol:e}); conjugacy is meaningless off the manifold",
            report.max_norm_lm
        )));
    }
    conjugacy_residuals(spec, opts)
}

/// Conjugacy residuals without the verdict precondition.
pub fn conjugacy_residuals(spec: &SystemSpec, opts: &FlowOptions) -> Result<ConjugacyReport> {
    Ok(conjugacy(spec, opts)?.report)
}

fn conjugacy(spec: &SystemSpec, opts: &FlowOptions) -> Result<Conjugacy> {
    let y = integrate_system(spec, opts)?;
    let x = integrate_fundamental_with(spec.n(), opts.t0, opts.t1, opts.step, |t| Ok(spec.point(t)?.reduced()))?;
    let start = spec.frame(opts.t0)?;
    let mut lift = Vec::with_capacity(y.t.len());
    let mut proj_res = Vec::with_capacity(y.t.len());
    let mut projs = Vec::with_capacity(y.t.len());
    for ((&t, yt), xt) in y.t.iter().zip(&y.y).zip(&x.y) {
        let f = spec.frame(t)?;
        let y_plus = matmul(yt, &start.phi_plus)?;
        lift.push(y_plus.sub(&matmul(&f.phi_plus, xt)?)?.frobenius_norm());
        proj_res.push(xt.sub(&matmul(&f.phi, &y_plus)?)?.frobenius_norm());
        projs.push(f.proj);
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let report = ConjugacyReport {
        t: y.t.clone(),
        max_lift_residual: max(&lift),
        max_projection_residual: max(&proj_res),
        lift_residual: lift,
        projection_residual: proj_res,
    };
    Ok(Conjugacy { report, y, x: x.y, projs })
}

/// Everything one flow run produces.
#[derive(Debug, Clone, Serialize)]
pub struct FlowResult {
    pub seed: u64,
    pub trials: usize,
    pub step: f64,
    pub t_samples: Vec<f64>,
    pub y_samples: Vec<DenseMatrix>,
    pub x_samples: Vec<DenseMatrix>,
    pub drift_mn: Vec<f64>,
    pub drift_complement: Vec<f64>,
    /// Larger of the two conjugacy residuals per sample.
    pub conjugacy_residual: Vec<f64>,
    pub conjugacy: ConjugacyReport,
}

impl FlowResult {
    pub fn max_drift_mn(&self) -> f64 {
        self.drift_mn.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_drift_complement(&self) -> f64 {
        self.drift_complement.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_conjugacy_residual(&self) -> f64 {
        self.conjugacy_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Integrates `Y` and `X` once and derives both drift curves and the
/// conjugacy residuals from them.
pub fn run_flow(spec: &SystemSpec, opts: &FlowOptions) -> Result<FlowResult> {
    if opts.trials == 0 {
        return Err(Error::Precondition("at least one trial is required".into()));
    }
    let Conjugacy { report, y, x, projs } = conjugacy(spec, opts)?;
    let cs = opts.random_vectors(spec.m());
    let drift_mn = drift_curve(&y, &projs, Side::Mn, &cs)?;
    let drift_complement = drift_curve(&y, &projs, Side::Complement, &cs)?;
    let conjugacy_residual = report.lift_residual.iter().zip(&report.projection_residual).map(|(a, b)| a.max(*b)).collect();
    Ok(FlowResult {
        seed: opts.seed,
        trials: opts.trials,
        step: opts.step,
        t_samples: y.t,
        y_samples: y.y,
        x_samples: x,
        drift_mn,
        drift_complement,
        conjugacy_residual,
        conjugacy: report,
    })
}
