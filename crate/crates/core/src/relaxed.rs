//! Piecewise-constant relaxed controls, the time change onto `[0, 1]` and the
//! auxiliary equation for `y`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{mixed_rhs, ControlSet, Dynamics, PiecewiseControl};
use crate::error::{Error, Result};
use crate::fractional::Position;
use crate::volterra::{uniform_nodes, PicardOptions, ProductWeights, VolterraStepper};

/// Probability weights over a control grid, constant on each piece of an
/// interval.
///
/// Piece ends are stored as fractions of the interval, so moving a control
/// between intervals only replaces the interval and round-trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedControl {
    lo: f64,
    hi: f64,
    ends: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl RelaxedControl {
    /// Pieces end at the absolute times `until` (the last must be `hi`).
    pub fn new(interval: (f64, f64), until: &[f64], weights: Vec<Vec<f64>>) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("degenerate interval [{lo}, {hi}]")));
        }
        if until.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                what: "relaxed control pieces",
                expected: weights.len(),
                got: until.len(),
            });
        }
        let span = hi - lo;
        let mut ends: Vec<f64> = until.iter().map(|&b| (b - lo) / span).collect();
        if let Some(last) = ends.last_mut() {
            if (*last - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "pieces must tile [{lo}, {hi}]; the last ends at {}",
                    until[until.len() - 1]
                )));
            }
            *last = 1.0;
        }
        RelaxedControl::from_fractions(interval, ends, weights)
    }

    fn from_fractions(
        interval: (f64, f64),
        ends: Vec<f64>,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("degenerate interval [{lo}, {hi}]")));
        }
        if weights.is_empty() {
            return Err(Error::Empty("relaxed control"));
        }
        let mut prev = 0.0;
        for &e in &ends {
            if !(e > prev && e <= 1.0) {
                return Err(Error::invalid("relaxed control pieces must be increasing"));
            }
            prev = e;
        }
        let width = weights[0].len();
        for w in &weights {
            if w.len() != width {
                return Err(Error::DimensionMismatch {
                    what: "probability weights",
                    expected: width,
                    got: w.len(),
                });
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "weights must be non-negative and sum to 1 (sum {sum})"
                )));
            }
        }
        Ok(RelaxedControl {
            lo,
            hi,
            ends,
            weights,
        })
    }

    /// One piece carrying `weights` over the whole interval.
    pub fn constant(interval: (f64, f64), weights: Vec<f64>) -> Result<Self> {
        RelaxedControl::from_fractions(interval, vec![1.0], vec![weights])
    }

    /// The Dirac measure at control `index` over the whole interval.
    pub fn dirac(interval: (f64, f64), controls: usize, index: usize) -> Result<Self> {
        RelaxedControl::constant(interval, dirac_weights(controls, index)?)
    }

    /// `pieces.len()` equal pieces on the interval.
    pub fn equal_pieces(interval: (f64, f64), weights: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        let ends = (1..=m)
            .map(|i| if i == m { 1.0 } else { i as f64 / m as f64 })
            .collect();
        RelaxedControl::from_fractions(interval, ends, weights)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn piece_count(&self) -> usize {
        self.weights.len()
    }

    /// Absolute end time of every piece.
    pub fn until(&self) -> Vec<f64> {
        let span = self.hi - self.lo;
        self.ends
            .iter()
            .map(|&e| {
                if e == 1.0 {
                    self.hi
                } else {
                    self.lo + e * span
                }
            })
            .collect()
    }

    pub fn piece_weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    /// Number of control points the weights range over.
    pub fn width(&self) -> usize {
        self.weights[0].len()
    }

    /// Index of the piece containing `tau` (right-continuous; the end point
    /// belongs to the last piece).
    pub fn piece_at(&self, tau: f64) -> usize {
        let frac = (tau - self.lo) / (self.hi - self.lo);
        let k = self.ends.partition_point(|&e| e <= frac);
        k.min(self.ends.len() - 1)
    }

    pub fn weights_at(&self, tau: f64) -> &[f64] {
        &self.weights[self.piece_at(tau)]
    }

    pub(crate) fn check_against(&self, controls: &ControlSet) -> Result<()> {
        controls.check_weights(&self.weights[0])
    }

    /// Same pieces and weights on another interval.
    pub fn rescaled(&self, interval: (f64, f64)) -> Result<Self> {
        RelaxedControl::from_fractions(interval, self.ends.clone(), self.weights.clone())
    }

    pub fn to_json(&self) -> RelaxedControlJson {
        RelaxedControlJson {
            interval: [self.lo, self.hi],
            pieces: self
                .until()
                .into_iter()
                .zip(&self.weights)
                .map(|(until, w)| PieceJson {
                    until,
                    weights: w.clone(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &RelaxedControlJson) -> Result<Self> {
        let until: Vec<f64> = json.pieces.iter().map(|p| p.until).collect();
        let weights = json.pieces.iter().map(|p| p.weights.clone()).collect();
        RelaxedControl::new((json.interval[0], json.interval[1]), &until, weights)
    }
}

/// `{interval: [a, b], pieces: [{until, weights}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxedControlJson {
    pub interval: [f64; 2],
    pub pieces: Vec<PieceJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceJson {
    pub until: f64,
    pub weights: Vec<f64>,
}

pub fn dirac_weights(controls: usize, index: usize) -> Result<Vec<f64>> {
    if index >= controls {
        return Err(Error::invalid(format!(
            "control index {index} outside a set of {controls} points"
        )));
    }
    let mut w = vec![0.0; controls];
    w[index] = 1.0;
    Ok(w)
}

/// Dirac-valued relaxed control with the pieces of `u`.
pub fn lift_ordinary(u: &PiecewiseControl, controls: &ControlSet) -> Result<RelaxedControl> {
    let weights = u
        .indices()
        .iter()
        .map(|&i| dirac_weights(controls.len(), i))
        .collect::<Result<Vec<_>>>()?;
    RelaxedControl::new((u.start(), u.end()), &u.breaks()[1..], weights)
}

/// `π`: moves a control on `[t, T]` onto `[0, 1]` via `ϑ = (τ − t)/(T − t)`.
pub fn time_change_pi(mu: &RelaxedControl, t: f64, horizon: f64) -> Result<RelaxedControl> {
    let (lo, hi) = mu.interval();
    if !(horizon > t) {
        return Err(Error::invalid(format!(
            "degenerate interval [{t}, {horizon}]"
        )));
    }
    if lo != t || hi != horizon {
        return Err(Error::invalid(format!(
            "control lives on [{lo}, {hi}], expected [{t}, {horizon}]"
        )));
    }
    mu.rescaled((0.0, 1.0))
}

/// `π^{-1}`: moves a control on `[0, 1]` onto `[t, T]`.
pub fn time_change_inverse(nu: &RelaxedControl, t: f64, horizon: f64) -> Result<RelaxedControl> {
    if nu.interval() != (0.0, 1.0) {
        return Err(Error::invalid("expected a control on [0, 1]"));
    }
    nu.rescaled((t, horizon))
}

/// Solution of
/// `y(ϑ) = a(t + ϑ(T−t) | t, w) + (T−t)^α/Γ(α) ∫_0^ϑ f*(t + ζ(T−t), y(ζ), ν(ζ)) (ϑ−ζ)^{α−1} dζ`.
#[derive(Debug, Clone)]
pub struct AuxSolution {
    nodes: Vec<f64>,
    samples: Vec<DVector<f64>>,
    rates: Vec<DVector<f64>>,
    source: Position,
    control: RelaxedControl,
}

impl AuxSolution {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    /// `f*` on each cell, evaluated at its right node.
    pub fn rates(&self) -> &[DVector<f64>] {
        &self.rates
    }

    pub fn source(&self) -> &Position {
        &self.source
    }

    pub fn control(&self) -> &RelaxedControl {
        &self.control
    }

    pub fn endpoint(&self) -> &DVector<f64> {
        self.samples.last().expect("solution has nodes")
    }

    /// Index of the node `theta` (to 1e-12).
    pub fn node_index(&self, theta: f64) -> Result<usize> {
        let k = self.nodes.partition_point(|&s| s < theta - 1e-12);
        if k < self.nodes.len() && (self.nodes[k] - theta).abs() <= 1e-12 {
            Ok(k)
        } else {
            Err(Error::invalid(format!("y was not solved at ϑ = {theta}")))
        }
    }

    pub fn at(&self, theta: f64) -> Result<&DVector<f64>> {
        Ok(&self.samples[self.node_index(theta)?])
    }
}

/// `y` on `steps` equal cells of `[0, 1]`.
pub fn solve_auxiliary_y(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    steps: usize,
) -> Result<AuxSolution> {
    if steps < 8 {
        return Err(Error::invalid(format!(
            "need at least 8 solver steps, got {steps}"
        )));
    }
    solve_auxiliary_on(
        p,
        nu,
        dynamics,
        controls,
        ProductWeights::new(p.alpha(), uniform_nodes(0.0, 1.0, steps)),
    )
}

/// `y` on an arbitrary node set of `[0, 1]` (starting at 0).
pub(crate) fn solve_auxiliary_on(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    weights: ProductWeights,
) -> Result<AuxSolution> {
    let forcing: Vec<DVector<f64>> = {
        let (t, horizon) = (p.t(), p.horizon());
        weights
            .nodes()
            .iter()
            .map(|&th| p.extension_a((t + th * (horizon - t)).min(horizon)))
            .collect::<Result<_>>()?
    };
    solve_auxiliary_with_forcing(p, nu, dynamics, controls, weights, &forcing)
}

/// As [`solve_auxiliary_on`] with the free drift `a` precomputed at the nodes.
pub(crate) fn solve_auxiliary_with_forcing(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    weights: ProductWeights,
    forcing: &[DVector<f64>],
) -> Result<AuxSolution> {
    if !p.is_interior() {
        return Err(Error::invalid("the auxiliary equation needs t < T"));
    }
    if nu.interval() != (0.0, 1.0) {
        return Err(Error::invalid(
            "the auxiliary equation takes a control on [0, 1]",
        ));
    }
    if p.dim() != dynamics.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "position vs dynamics",
            expected: dynamics.state_dim(),
            got: p.dim(),
        });
    }
    nu.check_against(controls)?;
    let (t, horizon) = (p.t(), p.horizon());
    let span = horizon - t;
    let scale = span.powf(p.alpha());
    let nodes = weights.nodes().to_vec();
    let pieces: Vec<usize> = nodes
        .windows(2)
        .map(|w| nu.piece_at(0.5 * (w[0] + w[1])))
        .collect();
    let lipschitz = dynamics.lipschitz_hint();
    let mut stepper = VolterraStepper::new(
        weights,
        scale,
        forcing[0].clone(),
        PicardOptions::default(),
        lipschitz,
    )?;
    while !stepper.is_done() {
        let k = stepper.index() + 1;
        let tau = (t + nodes[k] * span).min(horizon);
        let w = nu.piece_weights(pieces[k - 1]);
        stepper.step(forcing[k].clone(), |y| {
            mixed_rhs(dynamics, controls, tau, y, w)
        })?;
    }
    let (nodes, samples, rates) = stepper.into_parts();
    Ok(AuxSolution {
        nodes,
        samples,
        rates,
        source: p.clone(),
        control: nu.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> ControlSet {
        ControlSet::uniform_1d(-1.0, 1.0, 3).unwrap()
    }

    #[test]
    fn pi_maps_breakpoints_affinely() {
        let mu = RelaxedControl::new(
            (0.5, 1.0),
            &[0.75, 1.0],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
        )
        .unwrap();
        let nu = time_change_pi(&mu, 0.5, 1.0).unwrap();
        assert_eq!(nu.interval(), (0.0, 1.0));
        assert_eq!(nu.until(), vec![0.5, 1.0]);
        let back = time_change_inverse(&nu, 0.5, 1.0).unwrap();
        assert_eq!(back, mu);
    }

    #[test]
    fn pi_rejects_mismatched_interval() {
        let mu = RelaxedControl::dirac((0.0, 1.0), 3, 0).unwrap();
        assert!(time_change_pi(&mu, 0.5, 1.0).is_err());
        assert!(time_change_pi(&mu, 1.0, 1.0).is_err());
    }

    #[test]
    fn weights_are_validated() {
        assert!(RelaxedControl::constant((0.0, 1.0), vec![0.5, 0.6]).is_err());
        assert!(RelaxedControl::constant((0.0, 1.0), vec![-0.5, 1.5]).is_err());
        assert!(RelaxedControl::new((0.0, 1.0), &[0.5], vec![vec![1.0]]).is_err());
        assert!(RelaxedControl::new((0.0, 1.0), &[0.6, 0.4, 1.0], vec![vec![1.0]; 3]).is_err());
    }

    #[test]
    fn lift_keeps_breakpoints() {
        let set = three();
        let u = PiecewiseControl::new(vec![0.0, 0.3, 1.0], vec![2, 0], &set).unwrap();
        let mu = lift_ordinary(&u, &set).unwrap();
        assert_eq!(mu.until(), vec![0.3, 1.0]);
        assert_eq!(mu.piece_weights(0), &[0.0, 0.0, 1.0]);
        assert_eq!(mu.piece_weights(1), &[1.0, 0.0, 0.0]);
        assert_eq!(mu.piece_at(0.3), 1);
        assert_eq!(mu.piece_at(0.29), 0);
        assert_eq!(mu.piece_at(1.0), 1);
    }

    #[test]
    fn json_round_trip() {
        let mu = RelaxedControl::new(
            (0.2, 1.0),
            &[0.6, 1.0],
            vec![vec![0.25, 0.75, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let text = serde_json::to_string(&mu.to_json()).unwrap();
        let back: RelaxedControlJson = serde_json::from_str(&text).unwrap();
        assert_eq!(RelaxedControl::from_json(&back).unwrap(), mu);
        assert!(serde_json::from_str::<RelaxedControlJson>(
            r#"{"interval":[0,1],"pieces":[],"x":1}"#
        )
        .is_err());
    }
}
