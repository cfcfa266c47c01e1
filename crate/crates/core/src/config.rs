//! Run configuration: a single JSON document, unknown fields rejected.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlSet;
use crate::envelope::CandidateFamily;
use crate::error::{Error, Result};
use crate::feedback::{strategy_envelope, strategy_example, ConstantStrategy, Strategy};
use crate::fractional::{CaputoHistory, Position, PositionJson, ProblemConfig};
use crate::problem::{GFunction, Problem};

/// A start position: either `t`/`w0` with a constant Caputo history, or a
/// full serialized position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub w0: Vec<f64>,
    /// Constant Caputo derivative on `[0, t]`; zero if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caputo: Option<Vec<f64>>,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<PositionJson>,
}

fn default_cells() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<GFunction>,
    /// Control grid, one row per point; the problem default if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_starts")]
    pub starts: Vec<StartConfig>,
    /// `example`, `envelope` or `constant:<index>`.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_diameters")]
    pub diameters: Vec<f64>,
    /// Solver cells per motion (at least this many per feedback run).
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Cells of the sensitivity mesh.
    #[serde(default = "default_mesh")]
    pub mesh: usize,
    /// Pieces of the brute-force search; `0` disables it.
    #[serde(default = "default_pieces")]
    pub pieces: usize,
    /// Finite-difference shift as a fraction of `T − t`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Active-set tolerance; the default rule if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Direction for `dderiv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Grid index of the control assigned at `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_control: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_starts() -> Vec<StartConfig> {
    vec![StartConfig {
        t: 0.0,
        w0: Vec::new(),
        caputo: None,
        cells: default_cells(),
        position: None,
    }]
}

fn default_strategies() -> Vec<String> {
    vec!["envelope".into()]
}

fn default_diameters() -> Vec<f64> {
    vec![1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0]
}

fn default_steps() -> usize {
    1024
}

fn default_mesh() -> usize {
    256
}

fn default_pieces() -> usize {
    4
}

fn default_delta() -> f64 {
    1e-3
}

fn default_output() -> PathBuf {
    PathBuf::from("fracfb-out")
}

impl RunConfig {
    /// Parses and validates. Syntax errors carry line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let problem = self.problem()?;
        if self.steps < 8 {
            return Err(Error::invalid(format!(
                "steps: need at least 8, got {}",
                self.steps
            )));
        }
        if self.mesh < 8 {
            return Err(Error::invalid(format!(
                "mesh: need at least 8, got {}",
                self.mesh
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::invalid(format!(
                "delta: must lie in (0, 0.5], got {}",
                self.delta
            )));
        }
        if let Some(tol) = self.tolerance {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::invalid(format!(
                    "tolerance: must be positive, got {tol}"
                )));
            }
        }
        if self.diameters.is_empty() {
            return Err(Error::Empty("diameters"));
        }
        if self
            .diameters
            .iter()
            .any(|d| !(*d > 0.0 && *d <= self.horizon))
        {
            return Err(Error::invalid("diameters: must lie in (0, T]"));
        }
        if self.starts.is_empty() {
            return Err(Error::Empty("starts"));
        }
        for i in 0..self.starts.len() {
            self.start(i, &problem)?;
        }
        if let Some(dir) = &self.direction {
            if dir.len() != problem.config.dim {
                return Err(Error::DimensionMismatch {
                    what: "direction",
                    expected: problem.config.dim,
                    got: dir.len(),
                });
            }
        }
        if let Some(i) = self.final_control {
            if i >= problem.controls.len() {
                return Err(Error::invalid(format!(
                    "final_control: index {i} out of range"
                )));
            }
        }
        for name in &self.strategies {
            self.strategy(name, &problem)?;
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        let controls = match &self.controls {
            Some(rows) => Some(ControlSet::from_rows(rows)?),
            None => None,
        };
        if self.g.is_some() && self.problem != "example-g" {
            return Err(Error::invalid(format!(
                "g: only the example problem takes g, not `{}`",
                self.problem
            )));
        }
        Problem::named(&self.problem, self.alpha, self.horizon, self.g, controls)
    }

    /// The `i`-th start position.
    pub fn start(&self, i: usize, problem: &Problem) -> Result<Position> {
        let s = &self.starts[i];
        if let Some(json) = &s.position {
            let p = Position::from_json(json)?;
            if *p.config() != problem.config {
                return Err(Error::invalid(format!(
                    "starts[{i}]: position does not match alpha/T/dimension"
                )));
            }
            return Ok(p);
        }
        let dim = problem.config.dim;
        let w0 = if s.w0.is_empty() {
            DVector::zeros(dim)
        } else {
            DVector::from_vec(s.w0.clone())
        };
        if w0.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "start w0",
                expected: dim,
                got: w0.len(),
            });
        }
        position_with_constant(problem.config, s.t, w0, s.caputo.clone(), s.cells)
    }

    pub fn strategy(&self, name: &str, problem: &Problem) -> Result<Box<dyn Strategy>> {
        strategy_by_name(name, problem, self.tolerance, self.mesh)
    }

    /// The output directory, created if missing.
    pub fn ensure_output(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.output)?;
        Ok(&self.output)
    }
}

/// Resolves `example`, `envelope` or `constant:<index>`. The envelope rule
/// uses the constant controls of the grid as its family.
pub fn strategy_by_name(
    name: &str,
    problem: &Problem,
    tol: Option<f64>,
    mesh: usize,
) -> Result<Box<dyn Strategy>> {
    match name {
        "example" => {
            let g = problem.g.ok_or_else(|| {
                Error::invalid(format!(
                    "strategies: `example` needs the example problem, not `{}`",
                    problem.name
                ))
            })?;
            Ok(Box::new(strategy_example(g, &problem.controls)))
        }
        "envelope" => Ok(Box::new(strategy_envelope(
            CandidateFamily::constant_diracs(&problem.controls),
            problem,
            tol,
            mesh,
        ))),
        other => {
            let index = other
                .strip_prefix("constant:")
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| i < problem.controls.len())
                .ok_or_else(|| Error::UnknownName {
                    kind: "strategy",
                    name: other.to_string(),
                })?;
            Ok(Box::new(ConstantStrategy::new(
                problem.controls.point(index).clone(),
            )))
        }
    }
}

/// Position at `t` with a constant Caputo derivative on `[0, t]`.
pub fn position_with_constant(
    config: ProblemConfig,
    t: f64,
    w0: DVector<f64>,
    caputo: Option<Vec<f64>>,
    cells: usize,
) -> Result<Position> {
    let dim = config.dim;
    let c = caputo
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(dim));
    if c.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "start caputo",
            expected: dim,
            got: c.len(),
        });
    }
    if t == 0.0 {
        return Position::new(config, 0.0, w0, CaputoHistory::empty(dim));
    }
    Position::with_constant_history(config, t, w0, c, cells.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem": "example-g", "alpha": 0.5, "T": 1.0, "g": "one"}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(c.steps, 1024);
        assert_eq!(c.strategies, vec!["envelope".to_string()]);
        let problem = c.problem().unwrap();
        let p = c.start(0, &problem).unwrap();
        assert_eq!(p.t(), 0.0);
        assert_eq!(p.w0()[0], 0.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"problem": "example-g", "alpha": 0.5, "T": 1.0, "stpes": 10}"#;
        let err = RunConfig::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("stpes"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn bad_alpha_reports_range() {
        let text = r#"{"problem": "example-g", "alpha": 1.5, "T": 1.0}"#;
        let err = RunConfig::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("alpha out of (0,1)"), "{err}");
    }

    #[test]
    fn strategies_resolve() {
        let c = RunConfig::from_json_str(MINIMAL).unwrap();
        let problem = c.problem().unwrap();
        assert!(c
            .strategy("constant:2", &problem)
            .unwrap()
            .name()
            .starts_with("constant"));
        assert!(c.strategy("constant:3", &problem).is_err());
        assert!(c.strategy("greedy", &problem).is_err());
        let damped = r#"{"problem": "damped", "alpha": 0.5, "T": 1.0, "strategies": ["example"]}"#;
        assert!(RunConfig::from_json_str(damped).is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"{"problem": "oscillator", "alpha": 0.7, "T": 2.0,
            "starts": [{"t": 0.5, "w0": [1, 0], "caputo": [0.1, -0.2], "cells": 4}],
            "direction": [1, 0], "tolerance": 0.01}"#;
        let c = RunConfig::from_json_str(text).unwrap();
        let back = RunConfig::from_json_str(&c.to_json_string().unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
