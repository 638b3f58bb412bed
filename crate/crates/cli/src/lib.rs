//! Subcommand implementations for the `invman` binary.
//!
//! Each command returns a [`CommandOutput`]: a JSON report for stdout, a
//! short human summary for stderr and the exit code. Failures are split
//! into input problems (exit 2) and numerical ones (exit 3).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::ValueEnum;
use invman::config::ConfigFile;
use invman::flow::{self, FlowResult};
use invman::invariance::{self, InvarianceReport, Verdicts};
use invman::scenario::{self, Structure};
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            CliError::Input(e) | CliError::Numerical(e) => e,
        }
    }
}

impl From<invman::Error> for CliError {
    fn from(e: invman::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.into())
        } else {
            CliError::Numerical(e.into())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Assertion {
    /// Mⁿ and M^{m−n} jointly invariant (L = 0)
    Joint,
    /// Mⁿ invariant (L M = 0)
    Mn,
    /// M^{m−n} in ker L (L (E − M) = 0)
    Complement,
}

impl Assertion {
    fn holds(self, v: Verdicts) -> bool {
        match self {
            Assertion::Joint => v.joint,
            Assertion::Mn => v.mn,
            Assertion::Complement => v.complement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Kind {
    #[value(alias = "block-diagonal")]
    BlockDiagonal,
    #[value(alias = "upper-triangular")]
    UpperTriangular,
    #[value(alias = "lower-triangular")]
    LowerTriangular,
    Full,
}

impl From<Kind> for Structure {
    fn from(k: Kind) -> Self {
        match k {
            Kind::BlockDiagonal => Structure::BlockDiagonal,
            Kind::UpperTriangular => Structure::UpperTriangular,
            Kind::LowerTriangular => Structure::LowerTriangular,
            Kind::Full => Structure::Full,
        }
    }
}

#[derive(Debug)]
pub struct CommandOutput {
    pub exit: u8,
    pub report: Value,
    pub summary: String,
}

pub fn load_config(path: &Path) -> CliResult<ConfigFile> {
    ConfigFile::load(path).map_err(|e| CliError::Input(anyhow!(e)))
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn header(cmd: &str, cfg: &ConfigFile, report_kind: &str) -> String {
    format!(
        "{cmd}: m = {}, n = {}, {} grid points on [{}, {}], tol {:e}, {report_kind} pseudoinverse\n",
        cfg.m, cfg.n, cfg.grid.count, cfg.grid.start, cfg.grid.end, cfg.tolerance
    )
}

fn kind_name(r: &InvarianceReport) -> &'static str {
    match r.pseudoinverse {
        invariance::PseudoinverseKind::Stacked => "stacked",
        invariance::PseudoinverseKind::MoorePenrose => "Moore-Penrose",
    }
}

/// Verdicts on the configured grid; exit 0 iff `assertion` holds.
pub fn cmd_check(cfg: &ConfigFile, assertion: Assertion) -> CliResult<CommandOutput> {
    let spec = cfg.system_spec()?;
    let report = invariance::verdicts(&spec, cfg.tolerance)?;
    let v = report.verdicts();
    let holds = assertion.holds(v);

    let mut s = header("check", cfg, kind_name(&report));
    let _ = writeln!(s, "  max ‖L‖       = {:.3e}   joint invariant:      {}", report.max_norm_l, yes(v.joint));
    let _ = writeln!(s, "  max ‖LM‖      = {:.3e}   Mⁿ invariant:         {}", report.max_norm_lm, yes(v.mn));
    let _ = writeln!(s, "  max ‖L(E−M)‖  = {:.3e}   complement condition: {}", report.max_norm_l_complement, yes(v.complement));
    if let Some(expected) = cfg.expected {
        let _ = writeln!(s, "  embedded expectation matched: {}", yes(expected == v));
    }
    let _ = writeln!(s, "assertion {}: {}", assertion_name(assertion), if holds { "holds" } else { "FAILS" });

    Ok(CommandOutput {
        exit: if holds { EXIT_OK } else { EXIT_VERDICT },
        report: json!({
            "command": "check",
            "assertion": assertion,
            "holds": holds,
            "verdicts": v,
            "expected": cfg.expected,
            "expected_matched": cfg.expected.map(|e| e == v),
            "report": report,
        }),
        summary: s,
    })
}

fn assertion_name(a: Assertion) -> &'static str {
    match a {
        Assertion::Joint => "joint",
        Assertion::Mn => "mn",
        Assertion::Complement => "complement",
    }
}

/// `P(t)` on the grid plus conjugacy residuals over the flow window.
/// Refuses (exit 1) when `Mⁿ` is not invariant.
pub fn cmd_reduce(cfg: &ConfigFile) -> CliResult<CommandOutput> {
    let spec = cfg.system_spec()?;
    let report = invariance::verdicts(&spec, cfg.tolerance)?;
    let mut s = header("reduce", cfg, kind_name(&report));
    if !report.mn_invariant {
        let _ = writeln!(
            s,
            "  Mⁿ is not invariant: max ‖LM‖ = {:.3e} > {:e}; the reduced system does not describe the flow",
            report.max_norm_lm, cfg.tolerance
        );
        return Ok(CommandOutput {
            exit: EXIT_VERDICT,
            report: json!({
                "command": "reduce",
                "mn_invariant": false,
                "max_norm_lm": report.max_norm_lm,
                "tolerance": cfg.tolerance,
            }),
            summary: s,
        });
    }
    let p = spec
        .t_grid()
        .iter()
        .map(|&t| spec.point(t).map(|pt| pt.reduced()))
        .collect::<invman::Result<Vec<_>>>()?;
    let opts = cfg.flow_options();
    let conj = flow::conjugacy_residuals(&spec, &opts)?;
    let _ = writeln!(s, "  max ‖LM‖ = {:.3e}, Mⁿ invariant", report.max_norm_lm);
    let _ = writeln!(
        s,
        "  conjugacy on [{}, {}], h = {:e}: max ‖YΦ⁺(t0) − Φ⁺X‖ = {:.3e}, max ‖X − ΦYΦ⁺(t0)‖ = {:.3e}",
        opts.t0, opts.t1, opts.step, conj.max_lift_residual, conj.max_projection_residual
    );
    Ok(CommandOutput {
        exit: EXIT_OK,
        report: json!({
            "command": "reduce",
            "mn_invariant": true,
            "max_norm_lm": report.max_norm_lm,
            "tolerance": cfg.tolerance,
            "t_grid": spec.t_grid(),
            "p": p,
            "conjugacy": {
                "window": [opts.t0, opts.t1],
                "step": opts.step,
                "max_lift_residual": conj.max_lift_residual,
                "max_projection_residual": conj.max_projection_residual,
            },
        }),
        summary: s,
    })
}

fn decimate<T: Clone>(v: &[T], stride: usize) -> Vec<T> {
    let mut out: Vec<T> = v.iter().step_by(stride).cloned().collect();
    if !(v.len() - 1).is_multiple_of(stride) {
        out.push(v[v.len() - 1].clone());
    }
    out
}

/// Drift curves on both sides and conjugacy residuals. With `csv_dir`,
/// every sample is also written to `csv_dir/flow.csv`.
pub fn cmd_flow(cfg: &ConfigFile, csv_dir: Option<&Path>) -> CliResult<CommandOutput> {
    let spec = cfg.system_spec()?;
    let opts = cfg.flow_options();
    let r = flow::run_flow(&spec, &opts)?;
    let csv_path = csv_dir.map(|d| write_csv(d, &r)).transpose()?;

    let stride = cfg.flow.report_stride;
    let mut s = format!(
        "flow: m = {}, n = {}, window [{}, {}], h = {:e}, {} trials, seed {}\n",
        cfg.m, cfg.n, opts.t0, opts.t1, opts.step, opts.trials, opts.seed
    );
    let _ = writeln!(s, "  max drift off Mⁿ           = {:.3e}", r.max_drift_mn());
    let _ = writeln!(s, "  max drift off M^(m−n)      = {:.3e}", r.max_drift_complement());
    let _ = writeln!(s, "  max conjugacy residual     = {:.3e}", r.max_conjugacy_residual());
    if let Some(p) = &csv_path {
        let _ = writeln!(s, "  wrote {}", p.display());
    }
    Ok(CommandOutput {
        exit: EXIT_OK,
        report: json!({
            "command": "flow",
            "seed": r.seed,
            "trials": r.trials,
            "step": r.step,
            "window": [opts.t0, opts.t1],
            "report_stride": stride,
            "max_drift_mn": r.max_drift_mn(),
            "max_drift_complement": r.max_drift_complement(),
            "max_conjugacy_residual": r.max_conjugacy_residual(),
            "max_lift_residual": r.conjugacy.max_lift_residual,
            "max_projection_residual": r.conjugacy.max_projection_residual,
            "t": decimate(&r.t_samples, stride),
            "drift_mn": decimate(&r.drift_mn, stride),
            "drift_complement": decimate(&r.drift_complement, stride),
            "conjugacy_residual": decimate(&r.conjugacy_residual, stride),
            "csv": csv_path,
        }),
        summary: s,
    })
}

fn write_csv(dir: &Path, r: &FlowResult) -> CliResult<PathBuf> {
    let io = |e: anyhow::Error| CliError::Input(e);
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(io)?;
    let path = dir.join("flow.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display())).map_err(io)?;
    let mut write = || -> csv::Result<()> {
        w.write_record(["t", "drift_mn", "drift_complement", "conjugacy_residual"])?;
        for i in 0..r.t_samples.len() {
            w.serialize((r.t_samples[i], r.drift_mn[i], r.drift_complement[i], r.conjugacy_residual[i]))?;
        }
        w.flush()?;
        Ok(())
    };
    write().with_context(|| format!("cannot write {}", path.display())).map_err(io)?;
    Ok(path)
}

/// Writes a generated scenario config to `out`.
pub fn cmd_generate(kind: Structure, seed: u64, out: &Path) -> CliResult<CommandOutput> {
    let s = scenario::generate(kind, seed)?;
    let cfg = ConfigFile::from_scenario(&s, seed)?;
    fs::write(out, cfg.to_json())
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(CliError::Input)?;
    let v = s.expected_verdicts();
    let summary = format!(
        "generate: {kind} scenario, seed {seed}, m = {}, n = {} -> {}\n  expected verdicts: joint {}, Mⁿ {}, complement {}\n",
        cfg.m,
        cfg.n,
        out.display(),
        yes(v.joint),
        yes(v.mn),
        yes(v.complement)
    );
    Ok(CommandOutput {
        exit: EXIT_OK,
        report: json!({
            "command": "generate",
            "kind": kind,
            "seed": seed,
            "m": cfg.m,
            "n": cfg.n,
            "out": out,
            "expected": v,
        }),
        summary,
    })
}
