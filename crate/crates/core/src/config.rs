//! JSON system descriptions.
//!
//! ```json
//! {
//!   "m": 2, "n": 1,
//!   "q":   [["-1", "1"], ["0", "-2"]],
//!   "phi": [["1", "0"]],
//!   "grid": {"start": 0, "end": 5, "count": 201},
//!   "tolerance": 1e-8, "step": 1e-3, "seed": 42
//! }
//! ```
//!
//! Everything except `m`, `n`, `q` and `phi` has a default. `phi2`, when
//! present, selects the stacked pseudoinverse instead of the Moore-Penrose
//! one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowOptions, DEFAULT_STEP, DEFAULT_TRIALS, DEFAULT_WINDOW};
use crate::invariance::{uniform_grid, SystemSpec, Verdicts, DEFAULT_GRID_POINTS, DEFAULT_VERDICT_TOL};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::matexpr::{MatrixError, MatrixFunction, ParseError};
use crate::scenario::{ScenarioSpec, Structure};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPORT_STRIDE: usize = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{field}[{row}][{col}]: {source}\n    {text}\n    {pointer}")]
    Expression { field: &'static str, row: usize, col: usize, text: String, pointer: String, source: ParseError },
    #[error("{field}: {source}")]
    Matrix {
        field: &'static str,
        #[source]
        source: MatrixError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { start: 0.0, end: 5.0, count: DEFAULT_GRID_POINTS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub window: [f64; 2],
    pub trials: usize,
    /// Keep every k-th sample in JSON curves.
    pub report_stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { window: [DEFAULT_WINDOW.0, DEFAULT_WINDOW.1], trials: DEFAULT_TRIALS, report_stride: DEFAULT_REPORT_STRIDE }
    }
}

/// Where a generated config came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub kind: Structure,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub m: usize,
    pub n: usize,
    pub q: Vec<Vec<String>>,
    pub phi: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_rank_tolerance")]
    pub rank_tolerance: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Verdicts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioMeta>,
}

fn default_tolerance() -> f64 {
    DEFAULT_VERDICT_TOL
}

fn default_rank_tolerance() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Checks dimensions, numeric options and that every expression parses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.m == 0 || self.n == 0 {
            return invalid(format!("dimensions must be positive, got m = {}, n = {}", self.m, self.n));
        }
        if self.n >= self.m {
            return invalid(format!("need n < m, got n = {}, m = {}", self.n, self.m));
        }
        let GridConfig { start, end, count } = self.grid;
        if count < 2 {
            return invalid(format!("grid.count must be at least 2, got {count}"));
        }
        if !start.is_finite() || !end.is_finite() || start >= end {
            return invalid(format!("grid needs finite start < end, got [{start}, {end}]"));
        }
        for (name, v) in [("tolerance", self.tolerance), ("rank_tolerance", self.rank_tolerance), ("step", self.step)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.flow.trials == 0 {
            return invalid("flow.trials must be at least 1".into());
        }
        if self.flow.report_stride == 0 {
            return invalid("flow.report_stride must be at least 1".into());
        }
        if self.flow.window.iter().any(|w| !w.is_finite()) {
            return invalid("flow.window must be finite".into());
        }
        self.parse_matrices()?;
        Ok(())
    }

    fn parse_matrices(&self) -> Result<(MatrixFunction, MatrixFunction, Option<MatrixFunction>), ConfigError> {
        let (m, n) = (self.m, self.n);
        let q = parse_field("q", &self.q, (m, m))?;
        let phi = parse_field("phi", &self.phi, (n, m))?;
        let phi2 = self.phi2.as_ref().map(|g| parse_field("phi2", g, (m - n, m))).transpose()?;
        Ok((q, phi, phi2))
    }

    pub fn t_grid(&self) -> Vec<f64> {
        uniform_grid(self.grid.start, self.grid.end, self.grid.count)
    }

    pub fn system_spec(&self) -> Result<SystemSpec, crate::Error> {
        let (q, phi, phi2) = self.parse_matrices()?;
        Ok(SystemSpec::new(q, phi, phi2, self.t_grid())?.with_rank_tol(self.rank_tolerance))
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions::default()
            .window(self.flow.window[0], self.flow.window[1])
            .step(self.step)
            .trials(self.flow.trials)
            .seed(self.seed)
    }

    /// A self-contained config for a generated scenario, with its expected
    /// verdicts embedded.
    pub fn from_scenario(s: &ScenarioSpec, seed: u64) -> Result<Self, crate::Error> {
        let grid = s.t_grid();
        let grid = GridConfig { start: grid[0], end: grid[grid.len() - 1], count: grid.len() };
        Ok(Self {
            m: s.m(),
            n: s.n(),
            q: s.q_function()?.to_strings(),
            phi: s.phi1().to_strings(),
            phi2: Some(s.phi2().to_strings()),
            grid,
            tolerance: DEFAULT_VERDICT_TOL,
            rank_tolerance: DEFAULT_RANK_TOL,
            step: DEFAULT_STEP,
            seed,
            flow: FlowConfig::default(),
            expected: Some(s.expected_verdicts()),
            scenario: Some(ScenarioMeta { kind: s.structure(), seed }),
        })
    }
}

fn parse_field(field: &'static str, grid: &[Vec<String>], shape: (usize, usize)) -> Result<MatrixFunction, ConfigError> {
    let got_rows = grid.len();
    if got_rows != shape.0 || grid.iter().any(|r| r.len() != shape.1) {
        let cols: Vec<usize> = grid.iter().map(Vec::len).collect();
        return Err(ConfigError::Invalid(format!(
            "{field} must be {}x{}, got {got_rows} rows with lengths {cols:?}",
            shape.0, shape.1
        )));
    }
    MatrixFunction::parse(grid).map_err(|e| match e {
        MatrixError::Parse { row, col, source } => {
            let text = grid[row][col].clone();
            let width = text.get(..source.offset()).map_or(text.chars().count(), |s| s.chars().count());
            let pointer = format!("{}^", " ".repeat(width));
            ConfigError::Expression { field, row, col, text, pointer, source }
        }
        other => ConfigError::Matrix { field, source: other },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate;

    const NILPOTENT: &str = r#"{"m": 2, "n": 1, "q": [["0", "1"], ["0", "0"]], "phi": [["1", "0"]]}"#;

    #[test]
    fn defaults_fill_in() {
        let c = ConfigFile::from_json(NILPOTENT).unwrap();
        assert_eq!(c.grid, GridConfig { start: 0.0, end: 5.0, count: 201 });
        assert_eq!(c.tolerance, 1e-8);
        assert_eq!(c.step, 1e-3);
        assert_eq!(c.seed, 42);
        assert_eq!(c.flow.window, [0.0, 5.0]);
        assert!(c.phi2.is_none() && c.expected.is_none());
        let spec = c.system_spec().unwrap();
        assert_eq!(spec.t_grid().len(), 201);
    }

    #[test]
    fn parse_error_points_at_offset() {
        let text = r#"{"m": 2, "n": 1, "q": [["sin(", "1"], ["0", "0"]], "phi": [["1", "0"]]}"#;
        let err = ConfigFile::from_json(text).unwrap_err();
        match &err {
            ConfigError::Expression { field, row, col, source, pointer, .. } => {
                assert_eq!((*field, *row, *col), ("q", 0, 0));
                assert_eq!(source.offset(), 4);
                assert_eq!(pointer, "    ^");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("byte 4"));
    }

    #[test]
    fn invalid_configs() {
        let cases = [
            r#"{"m": 2, "n": 2, "q": [["0","0"],["0","0"]], "phi": [["1","0"],["0","1"]]}"#,
            r#"{"m": 2, "n": 1, "q": [["0","0"]], "phi": [["1","0"]]}"#,
            r#"{"m": 2, "n": 1, "q": [["0","0"],["0","0"]], "phi": [["1","0"]], "grid": {"start": 0, "end": 1, "count": 1}}"#,
            r#"{"m": 2, "n": 1, "q": [["0","0"],["0","0"]], "phi": [["1","0"]], "tolerance": 0}"#,
            r#"{"m": 2, "n": 1, "q": [["0","0"],["0","0"]], "phi": [["1","0"]], "phi2": [["0","1","2"]]}"#,
            r#"{"m": 2, "n": 1, "q": [["0","0"],["0","0"]], "phi": [["1","0"]], "colour": 1}"#,
            r#"{"m": 2, "n": 1, "q": [["0","0"],["0","0"]], "phi": [["tan(t)","0"]]}"#,
            r#"{"m": 2, "n": 1"#,
        ];
        for text in cases {
            assert!(ConfigFile::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn scenario_export_round_trips() {
        let s = generate(Structure::UpperTriangular, 3).unwrap();
        let c = ConfigFile::from_scenario(&s, 3).unwrap();
        let back = ConfigFile::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.expected, Some(Verdicts::new(false, true, false)));
        let spec = back.system_spec().unwrap();
        let direct = s.to_system_spec().unwrap();
        for t in [0.0, 2.5] {
            assert_eq!(spec.q().eval(t).unwrap(), direct.q().eval(t).unwrap());
        }
    }
}
