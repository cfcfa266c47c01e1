//! The value as a lower envelope of `ψ(·, ·, ν)` over a finite family of
//! relaxed controls, and its directional derivatives of order α.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dynamics::{solve_motion, ControlSet, PiecewiseControl};
use crate::error::{Error, Result};
use crate::fractional::Position;
use crate::problem::Problem;
use crate::relaxed::{lift_ordinary, time_change_pi, RelaxedControl};
use crate::sensitivity::{Jet, SensitivityMesh};

/// Largest number of open-loop controls `value_bruteforce` will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Finite stand-in for the set of relaxed controls on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFamily {
    members: Vec<RelaxedControl>,
}

impl CandidateFamily {
    pub fn new(members: Vec<RelaxedControl>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("candidate family"));
        }
        if members.iter().any(|m| m.interval() != (0.0, 1.0)) {
            return Err(Error::invalid("family members must live on [0, 1]"));
        }
        Ok(CandidateFamily { members })
    }

    /// One constant Dirac control per grid point, in grid order.
    pub fn constant_diracs(controls: &ControlSet) -> Self {
        let members = (0..controls.len())
            .map(|i| RelaxedControl::dirac((0.0, 1.0), controls.len(), i).expect("index in range"))
            .collect();
        CandidateFamily { members }
    }

    /// Adds the brute-force minimiser from `p`, moved onto `[0, 1]`.
    pub fn with_bruteforce(
        mut self,
        p: &Position,
        problem: &Problem,
        pieces: usize,
        steps: usize,
    ) -> Result<Self> {
        let best = value_bruteforce(p, problem, pieces, steps)?;
        if let Some(u) = best.control {
            let mu = lift_ordinary(&u, &problem.controls)?;
            let nu = time_change_pi(&mu, p.t(), p.horizon())?;
            if !self.members.contains(&nu) {
                self.members.push(nu);
            }
        }
        Ok(self)
    }

    pub fn members(&self) -> &[RelaxedControl] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Members whose value is within `tol` of the smallest.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
    pub min: f64,
    pub tol: f64,
}

/// Default active-set tolerance `1e-2 (1 + |min ψ|)`.
pub fn default_tolerance(min: f64) -> f64 {
    1e-2 * (1.0 + min.abs())
}

pub fn active_set_from_values(values: &[f64], tol: Option<f64>) -> Result<ActiveSet> {
    if values.is_empty() {
        return Err(Error::Empty("candidate family"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("family value"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = tol.unwrap_or_else(|| default_tolerance(min));
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "active-set tolerance must be positive, got {tol}"
        )));
    }
    let indices = (0..values.len())
        .filter(|&i| values[i] <= min + tol)
        .collect();
    Ok(ActiveSet { indices, min, tol })
}

/// `ψ` and its derivatives for every member at one position.
#[derive(Debug, Clone)]
pub struct EnvelopeJets {
    pub jets: Vec<Jet>,
}

impl EnvelopeJets {
    pub fn compute(
        p: &Position,
        family: &CandidateFamily,
        problem: &Problem,
        m: usize,
    ) -> Result<Self> {
        let mesh = SensitivityMesh::new(p, m)?;
        let jets = family
            .members()
            .par_iter()
            .map(|nu| mesh.jet(nu, &problem.dynamics, &problem.controls, &problem.cost))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvelopeJets { jets })
    }

    pub fn values(&self) -> Vec<f64> {
        self.jets.iter().map(|j| j.value).collect()
    }

    pub fn active_set(&self, tol: Option<f64>) -> Result<ActiveSet> {
        active_set_from_values(&self.values(), tol)
    }

    /// `min` over the active set of `∂_t^α ψ + ⟨∇^α ψ, f⟩`.
    pub fn dderiv(&self, f: &DVector<f64>, tol: Option<f64>) -> Result<f64> {
        envelope_dderiv_generic(&self.jets, f, tol)
    }
}

/// Envelope differentiation for an arbitrary family of members with known
/// value and derivatives at the position.
pub fn envelope_dderiv_generic(members: &[Jet], f: &DVector<f64>, tol: Option<f64>) -> Result<f64> {
    let values: Vec<f64> = members.iter().map(|j| j.value).collect();
    let active = active_set_from_values(&values, tol)?;
    for &i in &active.indices {
        if members[i].grad.len() != f.len() {
            return Err(Error::DimensionMismatch {
                what: "direction",
                expected: members[i].grad.len(),
                got: f.len(),
            });
        }
    }
    Ok(active
        .indices
        .iter()
        .map(|&i| members[i].along(f))
        .fold(f64::INFINITY, f64::min))
}

/// Active members of the family at `p`, ranked by `ψ` from the graded solve.
pub fn active_set(
    p: &Position,
    family: &CandidateFamily,
    problem: &Problem,
    tol: Option<f64>,
    m: usize,
) -> Result<ActiveSet> {
    EnvelopeJets::compute(p, family, problem, m)?.active_set(tol)
}

/// Directional derivative of order α of the family envelope in direction `f`.
pub fn dderiv_value(
    p: &Position,
    f: &DVector<f64>,
    family: &CandidateFamily,
    problem: &Problem,
    tol: Option<f64>,
    m: usize,
) -> Result<f64> {
    EnvelopeJets::compute(p, family, problem, m)?.dderiv(f, tol)
}

/// `min_u` of the envelope derivative along `f(t, w(t), u)`; zero when the
/// envelope is the value and the velocity sets are convex.
pub fn hjb_residual(
    p: &Position,
    family: &CandidateFamily,
    problem: &Problem,
    tol: Option<f64>,
    m: usize,
) -> Result<f64> {
    let jets = EnvelopeJets::compute(p, family, problem, m)?;
    let x = p.current();
    let mut best = f64::INFINITY;
    for u in problem.controls.points() {
        let f = problem.dynamics.rhs(p.t(), &x, u);
        best = best.min(jets.dderiv(&f, tol)?);
    }
    Ok(best)
}

/// Result of the exhaustive search over piecewise-constant controls.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub value: f64,
    /// `None` for a terminal position.
    pub control: Option<PiecewiseControl>,
}

/// Minimum of `σ(x(T))` over controls with `pieces` equal pieces and values
/// in the control grid; motions use `steps` solver cells.
pub fn value_bruteforce(
    p: &Position,
    problem: &Problem,
    pieces: usize,
    steps: usize,
) -> Result<BruteForce> {
    if !p.is_interior() {
        return Ok(BruteForce {
            value: problem.cost.value(&p.current()),
            control: None,
        });
    }
    if pieces == 0 {
        return Err(Error::invalid("need at least one piece"));
    }
    let base = problem.controls.len() as u128;
    let count = base
        .checked_pow(pieces as u32)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or(Error::EnumerationGuard(
            base.saturating_pow(pieces.min(64) as u32),
        ))?;
    let steps = steps.max(pieces).div_ceil(pieces) * pieces;
    let decode = |mut code: u128| -> Vec<usize> {
        let mut idx = vec![0; pieces];
        for slot in idx.iter_mut() {
            *slot = (code % base) as usize;
            code /= base;
        }
        idx
    };
    let (value, code) = (0..count)
        .into_par_iter()
        .map(|code| -> Result<(f64, u128)> {
            let u = PiecewiseControl::equal_pieces(
                p.t(),
                p.horizon(),
                decode(code),
                &problem.controls,
            )?;
            let motion = solve_motion(p, &u, &problem.dynamics, &problem.controls, steps)?;
            Ok((problem.cost.value(motion.terminal()), code))
        })
        .try_reduce(
            || (f64::INFINITY, u128::MAX),
            |a, b| {
                Ok(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                })
            },
        )?;
    let control =
        PiecewiseControl::equal_pieces(p.t(), p.horizon(), decode(code), &problem.controls)?;
    Ok(BruteForce {
        value,
        control: Some(control),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::scalar;
    use crate::problem::GFunction;
    use std::f64::consts::PI;

    fn jet(value: f64, dt: f64, grad: f64) -> Jet {
        Jet {
            value,
            dt,
            grad: scalar(grad),
        }
    }

    #[test]
    fn generic_envelope_cases() {
        let f = scalar(2.0);
        assert_eq!(
            envelope_dderiv_generic(&[jet(1.0, 0.5, 1.0)], &f, None).unwrap(),
            2.5
        );
        let strict = [jet(1.0, 0.5, 1.0), jet(0.0, 3.0, -1.0)];
        assert_eq!(envelope_dderiv_generic(&strict, &f, None).unwrap(), 1.0);
        let tied = [jet(1.0, 0.5, 1.0), jet(1.0, 3.0, -1.0)];
        assert_eq!(envelope_dderiv_generic(&tied, &f, None).unwrap(), 1.0);
        assert!(envelope_dderiv_generic(&[], &f, None).is_err());
    }

    #[test]
    fn active_set_tolerance_is_monotone() {
        let values = [0.0, 0.05, 0.2, -0.01];
        let mut prev = 0;
        for tol in [1e-3, 1e-2, 0.1, 1.0] {
            let a = active_set_from_values(&values, Some(tol)).unwrap();
            assert!(a.indices.len() >= prev);
            prev = a.indices.len();
        }
        assert!(active_set_from_values(&values, Some(0.0)).is_err());
    }

    #[test]
    fn example_active_sets() {
        let problem = Problem::example(0.5, 1.0, GFunction::One).unwrap();
        let family = CandidateFamily::constant_diracs(&problem.controls);
        let p = Position::initial(problem.config, scalar(0.0)).unwrap();
        assert_eq!(
            active_set(&p, &family, &problem, None, 256)
                .unwrap()
                .indices,
            vec![0, 2]
        );
        let p = Position::initial(problem.config, scalar(1.0)).unwrap();
        assert_eq!(
            active_set(&p, &family, &problem, None, 256)
                .unwrap()
                .indices,
            vec![2]
        );
    }

    #[test]
    fn example_dderiv_at_kink() {
        let problem = Problem::example(0.5, 1.0, GFunction::One).unwrap();
        let family = CandidateFamily::constant_diracs(&problem.controls);
        let p = Position::initial(problem.config, scalar(0.0)).unwrap();
        let jets = EnvelopeJets::compute(&p, &family, &problem, 1024).unwrap();
        for f in [0.0, 1.0, PI.sqrt(), 2.0] {
            let d = jets.dderiv(&scalar(f), None).unwrap();
            assert!((d - 4.0 * (1.0 - f / PI.sqrt())).abs() < 5e-2, "f={f}: {d}");
        }
    }

    #[test]
    fn bruteforce_guard_and_terminal() {
        let problem = Problem::example(0.5, 1.0, GFunction::One).unwrap();
        let p = Position::initial(problem.config, scalar(0.0)).unwrap();
        assert!(matches!(
            value_bruteforce(&p, &problem, 13, 13),
            Err(Error::EnumerationGuard(_))
        ));
        let end = Position::with_constant_history(problem.config, 1.0, scalar(0.5), scalar(0.0), 4)
            .unwrap();
        let b = value_bruteforce(&end, &problem, 4, 64).unwrap();
        assert_eq!(b.value, -0.25);
        assert!(b.control.is_none());
    }

    #[test]
    fn bruteforce_zero_control_only() {
        let controls = ControlSet::uniform_1d(0.0, 0.0, 1).unwrap();
        let problem =
            Problem::named("example-g", 0.5, 1.0, Some(GFunction::Cos), Some(controls)).unwrap();
        let p = Position::with_constant_history(problem.config, 0.3, scalar(0.2), scalar(0.4), 6)
            .unwrap();
        let b = value_bruteforce(&p, &problem, 3, 96).unwrap();
        let a = p.terminal_drift()[0];
        assert!((b.value + a * a).abs() < 1e-14);
    }
}
