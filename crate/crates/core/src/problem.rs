//! Built-in problems addressable by name.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlSet, CostFn, Dynamics};
use crate::error::{Error, Result};
use crate::fractional::ProblemConfig;
use crate::special::gamma;

/// Multiplier `g` of the scalar bang-bang example `D^α x = Γ(α) g(τ) u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GFunction {
    /// `g ≡ 1`
    One,
    /// `g = cos τ`
    Cos,
    /// `g = 1 − τ + τ²`
    Poly,
}

impl GFunction {
    pub fn value(self, tau: f64) -> f64 {
        match self {
            GFunction::One => 1.0,
            GFunction::Cos => tau.cos(),
            GFunction::Poly => 1.0 - tau + tau * tau,
        }
    }

    pub fn derivative(self, tau: f64) -> f64 {
        match self {
            GFunction::One => 0.0,
            GFunction::Cos => -tau.sin(),
            GFunction::Poly => 2.0 * tau - 1.0,
        }
    }

    /// `max |g|` on `[0, horizon]`.
    pub fn sup_abs(self, horizon: f64) -> f64 {
        match self {
            GFunction::One => 1.0,
            GFunction::Cos => {
                if horizon >= PI {
                    1.0
                } else {
                    1.0f64.max(horizon.cos().abs())
                }
            }
            GFunction::Poly => self.value(0.0).max(self.value(horizon)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GFunction::One => "one",
            GFunction::Cos => "cos",
            GFunction::Poly => "poly",
        }
    }
}

impl fmt::Display for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(GFunction::One),
            "cos" => Ok(GFunction::Cos),
            "poly" => Ok(GFunction::Poly),
            other => Err(Error::UnknownName {
                kind: "g function",
                name: other.to_string(),
            }),
        }
    }
}

/// Everything needed to pose one optimal control problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub config: ProblemConfig,
    pub dynamics: Dynamics,
    pub controls: ControlSet,
    pub cost: CostFn,
    /// Set for the scalar bang-bang example.
    pub g: Option<GFunction>,
}

pub const PROBLEM_NAMES: [&str; 3] = ["example-g", "damped", "oscillator"];

impl Problem {
    /// Looks up a built-in problem. `controls` overrides the default grid.
    pub fn named(
        name: &str,
        alpha: f64,
        horizon: f64,
        g: Option<GFunction>,
        controls: Option<ControlSet>,
    ) -> Result<Problem> {
        match name {
            "example-g" => example(alpha, horizon, g.unwrap_or(GFunction::One), controls),
            "damped" => damped(alpha, horizon, controls),
            "oscillator" => oscillator(alpha, horizon, controls),
            other => Err(Error::UnknownName {
                kind: "problem",
                name: other.to_string(),
            }),
        }
    }

    pub fn example(alpha: f64, horizon: f64, g: GFunction) -> Result<Problem> {
        example(alpha, horizon, g, None)
    }
}

fn default_controls(controls: Option<ControlSet>, dim: usize) -> Result<ControlSet> {
    let set = match controls {
        Some(set) => set,
        None => ControlSet::uniform_1d(-1.0, 1.0, 3)?,
    };
    if set.dim() != dim {
        return Err(Error::DimensionMismatch {
            what: "control set",
            expected: dim,
            got: set.dim(),
        });
    }
    Ok(set)
}

fn max_abs_control(set: &ControlSet) -> f64 {
    set.points().iter().map(|p| p.norm()).fold(0.0, f64::max)
}

fn example(
    alpha: f64,
    horizon: f64,
    g: GFunction,
    controls: Option<ControlSet>,
) -> Result<Problem> {
    let config = ProblemConfig::new(alpha, horizon, 1)?;
    let controls = default_controls(controls, 1)?;
    let ga = gamma(alpha);
    let growth = ga * g.sup_abs(horizon) * max_abs_control(&controls);
    let dynamics = Dynamics::new(
        1,
        1,
        Arc::new(move |tau, _x, u| DVector::from_element(1, ga * g.value(tau) * u[0])),
        Arc::new(move |tau, _x, u| DVector::from_element(1, ga * g.derivative(tau) * u[0])),
        Arc::new(|_, _, _| DMatrix::zeros(1, 1)),
        growth,
    )?
    .with_lipschitz(0.0);
    let cost = CostFn::new(
        Arc::new(|x| -x[0] * x[0]),
        Arc::new(|x| DVector::from_element(1, -2.0 * x[0])),
    );
    Ok(Problem {
        name: "example-g".into(),
        config,
        dynamics,
        controls,
        cost,
        g: Some(g),
    })
}

fn damped(alpha: f64, horizon: f64, controls: Option<ControlSet>) -> Result<Problem> {
    let config = ProblemConfig::new(alpha, horizon, 1)?;
    let controls = default_controls(controls, 1)?;
    let gain = 1.0 + 0.5 * horizon;
    let growth = 1.0f64.max(gain * max_abs_control(&controls));
    let dynamics = Dynamics::new(
        1,
        1,
        Arc::new(|tau, x, u| {
            DVector::from_element(1, -0.7 * x[0] + 0.3 * x[0].sin() + (1.0 + 0.5 * tau) * u[0])
        }),
        Arc::new(|_, _, u| DVector::from_element(1, 0.5 * u[0])),
        Arc::new(|_, x, _| DMatrix::from_element(1, 1, -0.7 + 0.3 * x[0].cos())),
        growth,
    )?
    .with_lipschitz(1.0);
    let cost = CostFn::new(
        Arc::new(|x| (x[0] - 0.5).powi(2)),
        Arc::new(|x| DVector::from_element(1, 2.0 * (x[0] - 0.5))),
    );
    Ok(Problem {
        name: "damped".into(),
        config,
        dynamics,
        controls,
        cost,
        g: None,
    })
}

fn oscillator(alpha: f64, horizon: f64, controls: Option<ControlSet>) -> Result<Problem> {
    let config = ProblemConfig::new(alpha, horizon, 2)?;
    let controls = default_controls(controls, 1)?;
    let gain = 1.0 + 0.2 * horizon;
    // ‖J‖ ≤ 1.5 for the linear part
    let growth = 1.5f64.max(gain * max_abs_control(&controls));
    let dynamics = Dynamics::new(
        2,
        1,
        Arc::new(|tau, x, u| {
            DVector::from_vec(vec![x[1], -x[0] - 0.3 * x[1] + (1.0 + 0.2 * tau) * u[0]])
        }),
        Arc::new(|_, _, u| DVector::from_vec(vec![0.0, 0.2 * u[0]])),
        Arc::new(|_, _, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.3])),
        growth,
    )?
    .with_lipschitz(1.5);
    let cost = CostFn::new(
        Arc::new(|x| (x[0] - 1.0).powi(2) + 0.5 * x[1] * x[1]),
        Arc::new(|x| DVector::from_vec(vec![2.0 * (x[0] - 1.0), x[1]])),
    );
    Ok(Problem {
        name: "oscillator".into(),
        config,
        dynamics,
        controls,
        cost,
        g: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(dim: usize) -> Vec<DVector<f64>> {
        [-2.0, -0.3, 0.0, 0.7, 1.9]
            .iter()
            .map(|&v| DVector::from_fn(dim, |i, _| v * (1.0 + 0.5 * i as f64)))
            .collect()
    }

    #[test]
    fn builtins_pass_validation() {
        for name in PROBLEM_NAMES {
            for g in [GFunction::One, GFunction::Cos, GFunction::Poly] {
                let p = Problem::named(name, 0.6, 1.5, Some(g), None).unwrap();
                let states = lattice(p.config.dim);
                p.dynamics
                    .validate(&p.controls, &[0.0, 0.4, 1.1, 1.5], &states)
                    .unwrap();
                p.cost.validate(&states).unwrap();
            }
        }
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(Problem::named("nope", 0.5, 1.0, None, None).is_err());
        assert!("sin".parse::<GFunction>().is_err());
        assert_eq!("poly".parse::<GFunction>().unwrap(), GFunction::Poly);
    }
}
