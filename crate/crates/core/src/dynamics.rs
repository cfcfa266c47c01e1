//! The controlled system `D^α x = f(τ, x, u)` and its motions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fractional::{GridFn, Position};
use crate::relaxed::RelaxedControl;
use crate::volterra::{uniform_nodes, PicardOptions, ProductWeights, VolterraStepper};

pub type VectorField = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Finite grid standing in for the compact control set `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    dim: usize,
    points: Vec<DVector<f64>>,
}

impl ControlSet {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("control set"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::invalid(
                "control points must have positive dimension",
            ));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "control point",
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("control point"));
            }
            if points[..i].iter().any(|q| q == p) {
                return Err(Error::invalid(format!(
                    "duplicate control point {:?}",
                    p.as_slice()
                )));
            }
        }
        Ok(ControlSet { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        ControlSet::new(rows.iter().map(|r| DVector::from_vec(r.clone())).collect())
    }

    /// `count` equispaced scalar controls on `[lo, hi]`.
    pub fn uniform_1d(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Empty("control set"));
        }
        if count == 1 {
            return ControlSet::new(vec![DVector::from_element(1, lo)]);
        }
        ControlSet::new(
            (0..count)
                .map(|i| DVector::from_element(1, lo + (hi - lo) * i as f64 / (count - 1) as f64))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// Index of `u` if it is a member (to 1e-12 absolute per component).
    pub fn index_of(&self, u: &DVector<f64>) -> Option<usize> {
        if u.len() != self.dim {
            return None;
        }
        self.points.iter().position(|p| (p - u).amax() <= 1e-12)
    }

    /// Index of the member closest to `u` (lowest index on ties).
    pub fn nearest(&self, u: &DVector<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - u).norm();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub(crate) fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "probability weights",
                expected: self.len(),
                got: weights.len(),
            });
        }
        Ok(())
    }
}

/// Right-hand side `f` with its partial derivatives.
#[derive(Clone)]
pub struct Dynamics {
    state_dim: usize,
    control_dim: usize,
    f: VectorField,
    df_dtau: VectorField,
    df_dx: MatrixField,
    growth: f64,
    lipschitz: Option<f64>,
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dynamics")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("growth", &self.growth)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl Dynamics {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        f: VectorField,
        df_dtau: VectorField,
        df_dx: MatrixField,
        growth: f64,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(Error::invalid(
                "state and control dimensions must be positive",
            ));
        }
        if !(growth >= 0.0 && growth.is_finite()) {
            return Err(Error::invalid(format!(
                "growth constant must be >= 0, got {growth}"
            )));
        }
        Ok(Dynamics {
            state_dim,
            control_dim,
            f,
            df_dtau,
            df_dx,
            growth,
            lipschitz: None,
        })
    }

    /// Lipschitz constant in `x` used to guard the implicit step.
    pub fn with_lipschitz(mut self, lambda: f64) -> Self {
        self.lipschitz = Some(lambda);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth
    }

    pub fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz
    }

    #[inline]
    pub fn rhs(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(tau, x, u)
    }

    #[inline]
    pub fn d_tau(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.df_dtau)(tau, x, u)
    }

    #[inline]
    pub fn d_x(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.df_dx)(tau, x, u)
    }

    /// Checks the growth bound and the supplied derivatives (against centred
    /// differences, 1e-4 relative) on a lattice of times, states and all
    /// controls.
    pub fn validate(
        &self,
        controls: &ControlSet,
        taus: &[f64],
        states: &[DVector<f64>],
    ) -> Result<()> {
        if controls.dim() != self.control_dim {
            return Err(Error::DimensionMismatch {
                what: "control set",
                expected: self.control_dim,
                got: controls.dim(),
            });
        }
        let h = 1e-6;
        for &tau in taus {
            for x in states {
                if x.len() != self.state_dim {
                    return Err(Error::DimensionMismatch {
                        what: "validation state",
                        expected: self.state_dim,
                        got: x.len(),
                    });
                }
                for u in controls.points() {
                    let fx = self.rhs(tau, x, u);
                    if fx.norm() > self.growth * (1.0 + x.norm()) * (1.0 + 1e-12) {
                        return Err(Error::invalid(format!(
                            "growth bound violated at tau={tau}, x={:?}",
                            x.as_slice()
                        )));
                    }
                    let fd_tau = (self.rhs(tau + h, x, u) - self.rhs(tau - h, x, u)) / (2.0 * h);
                    check_close("df/dtau", &self.d_tau(tau, x, u), &fd_tau)?;
                    let jac = self.d_x(tau, x, u);
                    for i in 0..self.state_dim {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[i] += h;
                        xm[i] -= h;
                        let col = (self.rhs(tau, &xp, u) - self.rhs(tau, &xm, u)) / (2.0 * h);
                        check_close("df/dx", &jac.column(i).into_owned(), &col)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_close(what: &str, analytic: &DVector<f64>, numeric: &DVector<f64>) -> Result<()> {
    let err = (analytic - numeric).norm();
    if err > 1e-4 * (1.0 + numeric.norm()) {
        return Err(Error::invalid(format!(
            "{what} disagrees with finite differences by {err:e}"
        )));
    }
    Ok(())
}

pub type ScalarField = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradientField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Terminal cost `σ` and its gradient.
#[derive(Clone)]
pub struct CostFn {
    sigma: ScalarField,
    gradient: GradientField,
}

impl fmt::Debug for CostFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CostFn")
    }
}

impl CostFn {
    pub fn new(sigma: ScalarField, gradient: GradientField) -> Self {
        CostFn { sigma, gradient }
    }

    #[inline]
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.sigma)(x)
    }

    #[inline]
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn validate(&self, states: &[DVector<f64>]) -> Result<()> {
        let h = 1e-6;
        for x in states {
            let mut fd = DVector::zeros(x.len());
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                fd[i] = (self.value(&xp) - self.value(&xm)) / (2.0 * h);
            }
            check_close("dsigma/dx", &self.gradient(x), &fd)?;
        }
        Ok(())
    }
}

/// Open-loop control, constant on each piece `[b_i, b_{i+1})`; pieces carry
/// indices into a [`ControlSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseControl {
    breaks: Vec<f64>,
    indices: Vec<usize>,
}

impl PiecewiseControl {
    pub fn new(breaks: Vec<f64>, indices: Vec<usize>, controls: &ControlSet) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("piecewise control"));
        }
        if breaks.len() != indices.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "control breakpoints",
                expected: indices.len() + 1,
                got: breaks.len(),
            });
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "control breakpoints must be strictly increasing",
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= controls.len()) {
            return Err(Error::invalid(format!(
                "control index {bad} outside a set of {} points",
                controls.len()
            )));
        }
        Ok(PiecewiseControl { breaks, indices })
    }

    pub fn constant(t: f64, horizon: f64, index: usize, controls: &ControlSet) -> Result<Self> {
        PiecewiseControl::new(vec![t, horizon], vec![index], controls)
    }

    /// `indices.len()` equal pieces on `[t, T]`.
    pub fn equal_pieces(
        t: f64,
        horizon: f64,
        indices: Vec<usize>,
        controls: &ControlSet,
    ) -> Result<Self> {
        let breaks = uniform_nodes(t, horizon, indices.len());
        PiecewiseControl::new(breaks, indices, controls)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().expect("non-empty")
    }

    /// Control index in effect at `tau` (right-continuous; the last piece
    /// includes the end point).
    pub fn index_at(&self, tau: f64) -> usize {
        let k = self.breaks[1..self.breaks.len() - 1].partition_point(|&b| b <= tau);
        self.indices[k]
    }
}

/// What generated a motion.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlRecord {
    Ordinary(PiecewiseControl),
    Relaxed(RelaxedControl),
    /// One control index per solver cell, produced by a feedback loop.
    Sampled(Vec<usize>),
}

/// Solved trajectory on `[t, T]`, attached to its initial position.
#[derive(Debug, Clone)]
pub struct Motion {
    start: Position,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    caputo: Vec<DVector<f64>>,
    control: ControlRecord,
}

impl Motion {
    pub(crate) fn from_parts(
        start: Position,
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
        caputo: Vec<DVector<f64>>,
        control: ControlRecord,
    ) -> Self {
        Motion {
            start,
            times,
            states,
            caputo,
            control,
        }
    }

    pub fn start(&self) -> &Position {
        &self.start
    }

    /// Solver nodes `t = τ_0 < … < τ_N = T`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    /// Caputo-derivative value on each cell `[τ_j, τ_{j+1})`.
    pub fn caputo_samples(&self) -> &[DVector<f64>] {
        &self.caputo
    }

    pub fn control(&self) -> &ControlRecord {
        &self.control
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("motion has at least one node")
    }

    /// State at any `τ ∈ [0, T]`: the history before `t`, the exact
    /// reconstruction from the cell derivatives after it.
    pub fn state_at(&self, tau: f64) -> Result<DVector<f64>> {
        if tau <= self.start.t() {
            return self.start.w_at(tau);
        }
        Ok(self.position_until(tau)?.current())
    }

    /// The position `(τ, x_τ)` reached along the motion. `τ` must be a node.
    pub fn position_at_node(&self, k: usize) -> Result<Position> {
        let mut history = self.start.history().clone();
        for j in 0..k {
            history.push_cell(self.times[j + 1], self.caputo[j].clone())?;
        }
        Position::new(
            *self.start.config(),
            self.times[k],
            self.start.w0().clone(),
            history,
        )
    }

    fn position_until(&self, tau: f64) -> Result<Position> {
        let mut history = self.start.history().clone();
        for j in 0..self.caputo.len() {
            if self.times[j] >= tau {
                break;
            }
            let end = self.times[j + 1].min(tau);
            history.push_cell(end, self.caputo[j].clone())?;
        }
        Position::new(*self.start.config(), tau, self.start.w0().clone(), history)
    }

    /// State samples on the uniform grid of `[0, T]`, available when the
    /// solver nodes are equispaced and `t` is a multiple of their spacing.
    pub fn state_grid(&self) -> Result<GridFn> {
        let n = self.times.len() - 1;
        let h = (self.times[n] - self.times[0]) / n as f64;
        let lead = self.start.t() / h;
        if (lead - lead.round()).abs() > 1e-9 {
            return Err(Error::invalid("motion grid is not aligned with the origin"));
        }
        let mut samples = Vec::new();
        for j in 0..lead.round() as usize {
            samples.push(self.start.w_at(j as f64 * h)?);
        }
        samples.extend(self.states.iter().cloned());
        GridFn::new(self.times[n], h, samples)
    }
}

/// `f*(τ, x, μ) = Σ_k μ_k f(τ, x, u_k)` for a probability vector over the
/// control grid.
pub fn f_star(
    dynamics: &Dynamics,
    controls: &ControlSet,
    tau: f64,
    x: &DVector<f64>,
    weights: &[f64],
) -> Result<DVector<f64>> {
    controls.check_weights(weights)?;
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid(format!(
            "weights must be a probability vector (sum {sum})"
        )));
    }
    Ok(mixed_rhs(dynamics, controls, tau, x, weights))
}

#[inline]
pub(crate) fn mixed_rhs(
    dynamics: &Dynamics,
    controls: &ControlSet,
    tau: f64,
    x: &DVector<f64>,
    weights: &[f64],
) -> DVector<f64> {
    let mut acc = DVector::zeros(dynamics.state_dim());
    for (w, u) in weights.iter().zip(controls.points()) {
        if *w != 0.0 {
            acc.axpy(*w, &dynamics.rhs(tau, x, u), 1.0);
        }
    }
    acc
}

/// `H(τ, x, s) = min_u ⟨s, f(τ, x, u)⟩` with its minimiser (lowest index on
/// ties).
pub fn hamiltonian_argmin(
    dynamics: &Dynamics,
    controls: &ControlSet,
    tau: f64,
    x: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<(f64, usize)> {
    if controls.is_empty() {
        return Err(Error::Empty("control set"));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, u) in controls.points().iter().enumerate() {
        let v = s.dot(&dynamics.rhs(tau, x, u));
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

pub fn hamiltonian(
    dynamics: &Dynamics,
    controls: &ControlSet,
    tau: f64,
    x: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<f64> {
    hamiltonian_argmin(dynamics, controls, tau, x, s).map(|(v, _)| v)
}

/// Largest distance from a midpoint of two sampled velocities to the sampled
/// velocity set, for `n ≤ 2`. Returns the offending midpoints whose distance
/// exceeds the coarsest nearest-neighbour spacing of the samples: a hint that
/// `f(τ, x, P)` is not convex.
pub fn convexity_warnings(
    dynamics: &Dynamics,
    controls: &ControlSet,
    tau: f64,
    x: &DVector<f64>,
) -> Vec<DVector<f64>> {
    if dynamics.state_dim() > 2 || controls.len() < 3 {
        return Vec::new();
    }
    let vels: Vec<DVector<f64>> = controls
        .points()
        .iter()
        .map(|u| dynamics.rhs(tau, x, u))
        .collect();
    let dist_to_set = |p: &DVector<f64>, skip: Option<usize>| {
        vels.iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, v)| (v - p).norm())
            .fold(f64::INFINITY, f64::min)
    };
    let spacing = (0..vels.len())
        .map(|i| dist_to_set(&vels[i], Some(i)))
        .fold(0.0, f64::max);
    let mut out = Vec::new();
    for i in 0..vels.len() {
        for j in i + 1..vels.len() {
            let mid = (&vels[i] + &vels[j]) * 0.5;
            if dist_to_set(&mid, None) > spacing * (1.0 + 1e-9) {
                out.push(mid);
            }
        }
    }
    out
}

fn check_motion_inputs(
    p: &Position,
    dynamics: &Dynamics,
    controls: &ControlSet,
    steps: usize,
) -> Result<()> {
    if !p.is_interior() {
        return Err(Error::invalid("motions start from positions with t < T"));
    }
    if steps < 8 {
        return Err(Error::invalid(format!(
            "need at least 8 solver steps, got {steps}"
        )));
    }
    if p.dim() != dynamics.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "position vs dynamics",
            expected: dynamics.state_dim(),
            got: p.dim(),
        });
    }
    if controls.dim() != dynamics.control_dim() {
        return Err(Error::DimensionMismatch {
            what: "control set vs dynamics",
            expected: dynamics.control_dim(),
            got: controls.dim(),
        });
    }
    Ok(())
}

/// Nodes, states and cell-wise Caputo derivatives.
pub(crate) type NodalSolution = (Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Solves the motion integral equation on `steps` equal cells of `[t, T]`
/// for a cell-wise velocity `rhs(cell, τ, x)`.
pub(crate) fn integrate_motion(
    p: &Position,
    nodes: Vec<f64>,
    lipschitz: Option<f64>,
    opts: PicardOptions,
    rhs: impl Fn(usize, f64, &DVector<f64>) -> DVector<f64>,
) -> Result<NodalSolution> {
    let weights = ProductWeights::new(p.alpha(), nodes);
    let mut stepper = VolterraStepper::new(weights, 1.0, p.current(), opts, lipschitz)?;
    while !stepper.is_done() {
        let k = stepper.index() + 1;
        let tau = stepper.node(k);
        let forcing = p.extension_a(tau)?;
        stepper.step(forcing, |x| rhs(k - 1, tau, x))?;
    }
    Ok(stepper.into_parts())
}

/// Motion from `p` under a piecewise-constant open-loop control.
pub fn solve_motion(
    p: &Position,
    u: &PiecewiseControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    steps: usize,
) -> Result<Motion> {
    solve_motion_with(p, u, dynamics, controls, steps, PicardOptions::default())
}

pub fn solve_motion_with(
    p: &Position,
    u: &PiecewiseControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    steps: usize,
    opts: PicardOptions,
) -> Result<Motion> {
    check_motion_inputs(p, dynamics, controls, steps)?;
    check_interval(u.start(), u.end(), p)?;
    let nodes = uniform_nodes(p.t(), p.horizon(), steps);
    let cell_controls: Vec<usize> = nodes
        .windows(2)
        .map(|w| u.index_at(0.5 * (w[0] + w[1])))
        .collect();
    let (times, states, rates) =
        integrate_motion(p, nodes, dynamics.lipschitz_hint(), opts, |cell, tau, x| {
            dynamics.rhs(tau, x, controls.point(cell_controls[cell]))
        })?;
    Ok(Motion::from_parts(
        p.clone(),
        times,
        states,
        rates,
        ControlRecord::Ordinary(u.clone()),
    ))
}

/// Motion from `p` under a relaxed control on `[t, T]`.
pub fn solve_motion_relaxed(
    p: &Position,
    mu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    steps: usize,
) -> Result<Motion> {
    check_motion_inputs(p, dynamics, controls, steps)?;
    let (lo, hi) = mu.interval();
    check_interval(lo, hi, p)?;
    mu.check_against(controls)?;
    let nodes = uniform_nodes(p.t(), p.horizon(), steps);
    let cell_pieces: Vec<usize> = nodes
        .windows(2)
        .map(|w| mu.piece_at(0.5 * (w[0] + w[1])))
        .collect();
    let (times, states, rates) = integrate_motion(
        p,
        nodes,
        dynamics.lipschitz_hint(),
        PicardOptions::default(),
        |cell, tau, x| {
            mixed_rhs(
                dynamics,
                controls,
                tau,
                x,
                mu.piece_weights(cell_pieces[cell]),
            )
        },
    )?;
    Ok(Motion::from_parts(
        p.clone(),
        times,
        states,
        rates,
        ControlRecord::Relaxed(mu.clone()),
    ))
}

fn check_interval(lo: f64, hi: f64, p: &Position) -> Result<()> {
    let tol = 1e-12 * p.horizon().max(1.0);
    if (lo - p.t()).abs() > tol || (hi - p.horizon()).abs() > tol {
        return Err(Error::invalid(format!(
            "control interval [{lo}, {hi}] does not match [{}, {}]",
            p.t(),
            p.horizon()
        )));
    }
    Ok(())
}
