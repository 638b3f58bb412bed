//! Acceptance suite. Runs every criterion in sequence, prints one line per
//! criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use invman::flow::{conjugacy_check, integrate_fundamental, manifold_drift, FlowOptions, Side};
use invman::invariance::{projector_derivative, verdicts, SystemSpec};
use invman::manifold::{check_lemma1, check_lemma2, ProjectorFrame};
use invman::scenario::{self, ScenarioSpec, Structure};
use invman::{DenseMatrix, MatrixFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VERDICT_TOL: f64 = 1e-8;
const STACKS: usize = 50;
const SCENARIOS_PER_KIND: u64 = 20;

/// Name, runtime limit in seconds, check.
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!("{}; {:.2}s", out.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            out.passed = false;
            out.detail.push_str(&format!(" exceeds {:.0}s", limit.as_secs_f64()));
        }
    }
    out
}

fn stacks() -> Vec<(DenseMatrix, DenseMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..STACKS)
        .map(|i| {
            let m = 2 + i % 7;
            let n = rng.random_range(1..m);
            scenario::random_stack(m, n, &mut rng)
        })
        .collect()
}

fn scenarios(kind: Structure, count: u64) -> Vec<ScenarioSpec> {
    (0..count).map(|seed| scenario::generate(kind, 1000 + seed).expect("scenario generation")).collect()
}

fn projector_algebra() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ranks_ok = true;
    for (p1, p2) in stacks() {
        let (n, p) = (p1.rows(), p2.rows());
        match ProjectorFrame::from_matrices(0.0, p1, p2, 1e-9) {
            Ok(frame) => {
                let ids = frame.identities(1e-9);
                worst = worst.max(ids.max_residual());
                ranks_ok &= ids.rank_m1 == n && ids.rank_m2 == p;
            }
            Err(e) => return outcome(false, format!("frame rejected: {e}")),
        }
    }
    outcome(worst <= 1e-9 && ranks_ok, format!("{STACKS} stacks, max residual {worst:.1e}, ranks ok: {ranks_ok}"))
}

fn kernel_and_image_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for (p1, p2) in stacks() {
        let frame = ProjectorFrame::from_matrices(0.0, p1, p2, 1e-9).expect("well-conditioned stack");
        let l1 = check_lemma1(&frame, 100, 1e-9, &mut rng);
        let l2 = check_lemma2(&frame, 100, 1e-9, &mut rng);
        worst = worst.max(l1.max_residual()).max(l2.max_residual());
        passed &= l1.passed && l2.passed;
    }
    outcome(passed, format!("{STACKS} stacks x 100 samples, max residual {worst:.1e}"))
}

fn round_trip() -> Outcome {
    let mut mismatches = Vec::new();
    let mut total = 0;
    for kind in Structure::ALL {
        for (i, s) in scenarios(kind, SCENARIOS_PER_KIND).iter().enumerate() {
            total += 1;
            let spec = s.to_system_spec().expect("system spec");
            assert_eq!(spec.t_grid().len(), 201);
            let got = verdicts(&spec, VERDICT_TOL).expect("verdicts").verdicts();
            if got != s.expected_verdicts() {
                mismatches.push(format!("{kind}#{i}"));
            }
        }
    }
    outcome(mismatches.is_empty(), format!("{total} scenarios, mismatches: {mismatches:?}"))
}

fn confinement() -> Outcome {
    let opts = FlowOptions::default().window(0.0, 5.0).step(1e-3);
    let mut diag_worst: f64 = 0.0;
    let mut upper_mn_worst: f64 = 0.0;
    let mut upper_comp_least = f64::INFINITY;
    for s in scenarios(Structure::BlockDiagonal, SCENARIOS_PER_KIND) {
        let spec = s.to_system_spec().expect("system spec");
        for side in [Side::Mn, Side::Complement] {
            diag_worst = diag_worst.max(manifold_drift(&spec, side, &opts).expect("drift").max);
        }
    }
    for s in scenarios(Structure::UpperTriangular, SCENARIOS_PER_KIND) {
        let coupling = s.t_grid().iter().map(|&t| s.blocks().c.eval(t).unwrap().frobenius_norm()).fold(0.0, f64::max);
        assert!(coupling >= 0.5, "generated coupling below 0.5");
        let spec = s.to_system_spec().expect("system spec");
        upper_mn_worst = upper_mn_worst.max(manifold_drift(&spec, Side::Mn, &opts).expect("drift").max);
        upper_comp_least = upper_comp_least.min(manifold_drift(&spec, Side::Complement, &opts).expect("drift").max);
    }
    let passed = diag_worst <= 1e-7 && upper_mn_worst <= 1e-7 && upper_comp_least > 1e-3;
    outcome(
        passed,
        format!(
            "block-diagonal drift {diag_worst:.1e}, upper Mn drift {upper_mn_worst:.1e}, \
             upper complement drift >= {upper_comp_least:.1e}"
        ),
    )
}

fn conjugacy() -> Outcome {
    let opts = FlowOptions::default().window(0.0, 2.0).step(1e-3);
    let mut lift: f64 = 0.0;
    let mut proj: f64 = 0.0;
    let mut count = 0;
    for kind in [Structure::BlockDiagonal, Structure::UpperTriangular] {
        for s in scenarios(kind, SCENARIOS_PER_KIND) {
            let r = conjugacy_check(&s.to_system_spec().unwrap(), &opts, VERDICT_TOL).expect("conjugacy");
            lift = lift.max(r.max_lift_residual);
            proj = proj.max(r.max_projection_residual);
            count += 1;
        }
    }
    outcome(lift <= 1e-6 && proj <= 1e-6, format!("{count} scenarios, lift {lift:.1e}, projection {proj:.1e}"))
}

fn derivative_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    let specs: Vec<SystemSpec> = (0..20u64)
        .map(|i| {
            let s = scenario::generate(Structure::ALL[(i % 4) as usize], 500 + i).unwrap();
            let spec = s.to_system_spec().unwrap();
            if i % 2 == 0 {
                spec
            } else {
                // Moore-Penrose projector of the same frame
                SystemSpec::new(spec.q().clone(), spec.phi().clone(), None, spec.t_grid().to_vec()).unwrap()
            }
        })
        .collect();
    for spec in &specs {
        for k in 0..20 {
            let t = 0.1 + 4.8 * k as f64 / 19.0;
            let exact = projector_derivative(spec, t).unwrap();
            let fd = spec.frame(t + h).unwrap().proj.sub(&spec.frame(t - h).unwrap().proj).unwrap().scale(0.5 / h);
            worst = worst.max(exact.sub(&fd).unwrap().max_abs());
        }
    }
    outcome(worst <= 1e-7, format!("20 specs x 20 points, max |dM/dt - fd| {worst:.1e}"))
}

fn integrator_order() -> Outcome {
    let parse = |rows: &[&[&str]]| {
        let grid: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        MatrixFunction::parse(&grid).unwrap()
    };
    let exp = parse(&[&["-1"]]);
    let rot = parse(&[&["0", "1"], &["-1", "0"]]);
    let exp_err = |h| (integrate_fundamental(&exp, 0.0, 1.0, h).unwrap().last()[(0, 0)] - (-1.0f64).exp()).abs();
    let rot_err = |h| integrate_fundamental(&rot, 0.0, PI, h).unwrap().last().add(&DenseMatrix::identity(2)).unwrap().max_abs();
    let r_exp = exp_err(0.2) / exp_err(0.1);
    let r_rot = rot_err(0.1) / rot_err(0.05);
    let ok = |r: f64| (8.0..=32.0).contains(&r);
    outcome(ok(r_exp) && ok(r_rot), format!("halving ratios: exponential {r_exp:.2}, rotation {r_rot:.2}"))
}

fn mn_criterion_equivalence() -> Outcome {
    let mut disagreements = Vec::new();
    let mut total = 0;
    for kind in Structure::ALL {
        for (i, s) in scenarios(kind, SCENARIOS_PER_KIND).iter().enumerate() {
            let spec = s.to_system_spec().unwrap();
            let mp = SystemSpec::new(spec.q().clone(), spec.phi().clone(), None, spec.t_grid().to_vec()).unwrap();
            for (label, sys) in [("stacked", &spec), ("mp", &mp)] {
                total += 1;
                let r = verdicts(sys, VERDICT_TOL).unwrap();
                if (r.max_norm_lm <= VERDICT_TOL) != r.mn_invariant_via_phi_plus {
                    disagreements.push(format!("{kind}#{i}/{label}"));
                }
            }
        }
    }
    outcome(disagreements.is_empty(), format!("{total} specs, disagreements: {disagreements:?}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("projector algebra", Some(1), projector_algebra),
        ("kernel and diffeomorphism checks", Some(2), kernel_and_image_checks),
        ("verdict round-trip", Some(10), round_trip),
        ("dynamical confinement", Some(30), confinement),
        ("conjugacy", None, conjugacy),
        ("derivative exactness", None, derivative_exactness),
        ("integrator order", None, integrator_order),
        ("Mⁿ criterion equivalence", None, mn_criterion_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let out = timed(limit.map(Duration::from_secs), run);
        let status = if out.passed { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {status} ({})", i + 1, out.detail);
        failed += usize::from(!out.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
