//! Positional strategies and the sampled feedback procedure.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hamiltonian_argmin, ControlSet, Dynamics};
use crate::envelope::{CandidateFamily, EnvelopeJets};
use crate::error::{Error, Result};
use crate::example::optimal_control_example;
use crate::fractional::Position;
use crate::problem::{GFunction, Problem};
use crate::volterra::{uniform_nodes, PicardOptions, ProductWeights, VolterraStepper};

/// Time partition `t = τ_1 < … < τ_{k+1} = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a partition needs at least two times"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid(
                "partition times must be strictly increasing",
            ));
        }
        Ok(Partition { times })
    }

    /// `k` equal pieces of `[t, T]`.
    pub fn uniform(t: f64, horizon: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("a partition needs at least one piece"));
        }
        Partition::new(uniform_nodes(t, horizon, k))
    }

    /// The coarsest uniform partition with diameter at most `diam`.
    pub fn with_diameter(t: f64, horizon: f64, diam: f64) -> Result<Self> {
        if !(diam > 0.0 && diam.is_finite()) {
            return Err(Error::invalid(format!(
                "diameter must be positive, got {diam}"
            )));
        }
        let k = ((horizon - t) / diam * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Partition::uniform(t, horizon, k)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn pieces(&self) -> usize {
        self.times.len() - 1
    }

    pub fn diam(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    fn is_uniform(&self) -> bool {
        let k = self.pieces() as f64;
        let (lo, hi) = (self.times[0], self.times[self.pieces()]);
        self.times
            .iter()
            .enumerate()
            .all(|(j, &s)| (s - (lo + (hi - lo) * j as f64 / k)).abs() <= 1e-12 * hi.abs().max(1.0))
    }
}

/// A positional control law `U: (t, w) ↦ u`.
pub trait Strategy: Send + Sync {
    fn name(&self) -> &str;

    /// Control point to apply at the position; must be a grid member.
    fn control(&self, p: &Position) -> Result<DVector<f64>>;
}

/// `U ≡ u₀`.
#[derive(Debug, Clone)]
pub struct ConstantStrategy {
    name: String,
    point: DVector<f64>,
}

impl ConstantStrategy {
    pub fn new(point: DVector<f64>) -> Self {
        let name = format!("constant{:?}", point.as_slice());
        ConstantStrategy { name, point }
    }
}

impl Strategy for ConstantStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn control(&self, _p: &Position) -> Result<DVector<f64>> {
        Ok(self.point.clone())
    }
}

/// The closed-form optimal rule of the scalar bang-bang example, snapped to
/// the nearest grid point.
#[derive(Debug, Clone)]
pub struct ExampleStrategy {
    g: GFunction,
    controls: ControlSet,
}

pub fn strategy_example(g: GFunction, controls: &ControlSet) -> ExampleStrategy {
    ExampleStrategy {
        g,
        controls: controls.clone(),
    }
}

impl Strategy for ExampleStrategy {
    fn name(&self) -> &str {
        "example"
    }

    fn control(&self, p: &Position) -> Result<DVector<f64>> {
        let u = DVector::from_element(1, optimal_control_example(p, self.g)?);
        Ok(self.controls.point(self.controls.nearest(&u)).clone())
    }
}

pub type GradientProvider = Arc<dyn Fn(&Position) -> Result<DVector<f64>> + Send + Sync>;

/// `argmin_u ⟨∇^α ρ(t, w), f(t, w(t), u)⟩` for a supplied gradient.
#[derive(Clone)]
pub struct SmoothStrategy {
    gradient: GradientProvider,
    dynamics: Dynamics,
    controls: ControlSet,
}

impl fmt::Debug for SmoothStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothStrategy").finish_non_exhaustive()
    }
}

pub fn strategy_smooth(
    gradient: GradientProvider,
    dynamics: &Dynamics,
    controls: &ControlSet,
) -> SmoothStrategy {
    SmoothStrategy {
        gradient,
        dynamics: dynamics.clone(),
        controls: controls.clone(),
    }
}

impl Strategy for SmoothStrategy {
    fn name(&self) -> &str {
        "smooth"
    }

    fn control(&self, p: &Position) -> Result<DVector<f64>> {
        let s = (self.gradient)(p)?;
        let (_, i) = hamiltonian_argmin(&self.dynamics, &self.controls, p.t(), &p.current(), &s)?;
        Ok(self.controls.point(i).clone())
    }
}

/// `argmin_u` of the envelope derivative along `f(t, w(t), u)`.
#[derive(Debug, Clone)]
pub struct EnvelopeStrategy {
    family: CandidateFamily,
    problem: Problem,
    tol: Option<f64>,
    mesh: usize,
}

/// Relative gap below which two envelope scores count as tied.
const SCORE_BAND: f64 = 1e-2;

/// Relative gap below which two member values count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

pub fn strategy_envelope(
    family: CandidateFamily,
    problem: &Problem,
    tol: Option<f64>,
    mesh: usize,
) -> EnvelopeStrategy {
    EnvelopeStrategy {
        family,
        problem: problem.clone(),
        tol,
        mesh,
    }
}

impl EnvelopeStrategy {
    /// Envelope derivative along each grid control, in grid order.
    pub fn scores(&self, p: &Position) -> Result<Vec<f64>> {
        Ok(self.ranked(p)?.into_iter().map(|(s, _)| s).collect())
    }

    /// Per control: the envelope derivative and the smallest member value
    /// among the active members that attain it.
    fn ranked(&self, p: &Position) -> Result<Vec<(f64, f64)>> {
        let jets = EnvelopeJets::compute(p, &self.family, &self.problem, self.mesh)?;
        let active = jets.active_set(self.tol)?;
        let x = p.current();
        self.problem
            .controls
            .points()
            .iter()
            .map(|u| {
                let f = self.problem.dynamics.rhs(p.t(), &x, u);
                let score = jets.dderiv(&f, Some(active.tol))?;
                let band = SCORE_BAND * (1.0 + score.abs());
                let witness = active
                    .indices
                    .iter()
                    .map(|&j| &jets.jets[j])
                    .filter(|jet| jet.along(&f) <= score + band)
                    .map(|jet| jet.value)
                    .fold(f64::INFINITY, f64::min);
                Ok((score, witness))
            })
            .collect()
    }
}

impl Strategy for EnvelopeStrategy {
    fn name(&self) -> &str {
        "envelope"
    }

    /// Smallest score; scores within the band are ranked by the value of
    /// the member attaining them, then by grid order.
    fn control(&self, p: &Position) -> Result<DVector<f64>> {
        let ranked = self.ranked(p)?;
        let min = ranked.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let band = SCORE_BAND * (1.0 + min.abs());
        let near: Vec<usize> = (0..ranked.len())
            .filter(|&i| ranked[i].0 <= min + band)
            .collect();
        let best = near
            .iter()
            .map(|&i| ranked[i].1)
            .fold(f64::INFINITY, f64::min);
        let tie = TIE_TOLERANCE * (1.0 + best.abs());
        let i = near
            .into_iter()
            .find(|&i| ranked[i].1 <= best + tie)
            .ok_or(Error::NonFinite("envelope score"))?;
        Ok(self.problem.controls.point(i).clone())
    }
}

/// Record of one feedback run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub strategy: String,
    pub partition: Vec<f64>,
    /// Control held on each partition piece.
    pub controls: Vec<Vec<f64>>,
    /// Control assigned to the instant `T`; it does not affect the motion.
    pub final_control: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub caputo: Vec<Vec<f64>>,
    pub cost: f64,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
}

impl SimReport {
    pub fn with_reference(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self.epsilon = Some(self.cost - rho);
        self
    }

    pub fn diam(&self) -> f64 {
        self.partition
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn terminal(&self) -> DVector<f64> {
        DVector::from_vec(self.states.last().cloned().unwrap_or_default())
    }
}

/// Runs the recursive feedback procedure: at each partition time the
/// strategy sees the position reached so far and its control is held until
/// the next partition time. `steps_per_piece` solver cells cover each piece.
pub fn run_feedback(
    p: &Position,
    strategy: &dyn Strategy,
    partition: &Partition,
    problem: &Problem,
    steps_per_piece: usize,
    final_control: Option<usize>,
) -> Result<SimReport> {
    let times = partition.times();
    let tol = 1e-12 * p.horizon().max(1.0);
    if (times[0] - p.t()).abs() > tol || (times[times.len() - 1] - p.horizon()).abs() > tol {
        return Err(Error::invalid(format!(
            "partition [{}, {}] does not span [{}, {}]",
            times[0],
            times[times.len() - 1],
            p.t(),
            p.horizon()
        )));
    }
    if !p.is_interior() {
        return Err(Error::invalid("feedback runs start from t < T"));
    }
    if steps_per_piece == 0 {
        return Err(Error::invalid("need at least one solver step per piece"));
    }
    if p.dim() != problem.dynamics.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "position vs dynamics",
            expected: problem.dynamics.state_dim(),
            got: p.dim(),
        });
    }
    let k = partition.pieces();
    let nodes = if partition.is_uniform() {
        uniform_nodes(p.t(), p.horizon(), k * steps_per_piece)
    } else {
        let mut nodes = vec![p.t()];
        for w in times.windows(2) {
            nodes.extend(
                uniform_nodes(w[0], w[1], steps_per_piece)
                    .into_iter()
                    .skip(1),
            );
        }
        *nodes.last_mut().expect("non-empty") = p.horizon();
        nodes
    };
    let controls = &problem.controls;
    let final_index = final_control.unwrap_or(0);
    if final_index >= controls.len() {
        return Err(Error::invalid(format!(
            "final control index {final_index} out of range"
        )));
    }
    let weights = ProductWeights::new(p.alpha(), nodes);
    let mut stepper = VolterraStepper::new(
        weights,
        1.0,
        p.current(),
        PicardOptions::default(),
        problem.dynamics.lipschitz_hint(),
    )?;
    let mut history = p.history().clone();
    let mut applied = Vec::with_capacity(k);
    for piece in 0..k {
        let node = piece * steps_per_piece;
        let here = Position::new(
            *p.config(),
            stepper.node(node),
            p.w0().clone(),
            history.clone(),
        )?;
        let u = strategy.control(&here)?;
        let index = controls
            .index_of(&u)
            .ok_or_else(|| Error::ControlNotInSet(u.iter().copied().collect()))?;
        let point = controls.point(index);
        for _ in 0..steps_per_piece {
            let next = stepper.index() + 1;
            let tau = stepper.node(next);
            let forcing = p.extension_a(tau)?;
            stepper.step(forcing, |x| problem.dynamics.rhs(tau, x, point))?;
            let rate = stepper.rates()[next - 1].clone();
            history.push_cell(tau, rate)?;
        }
        applied.push(point.iter().copied().collect());
    }
    let (times_out, states, rates) = stepper.into_parts();
    let terminal = states.last().expect("solved").clone();
    Ok(SimReport {
        strategy: strategy.name().to_string(),
        partition: times.to_vec(),
        controls: applied,
        final_control: controls.point(final_index).iter().copied().collect(),
        times: times_out,
        states: states.iter().map(|s| s.iter().copied().collect()).collect(),
        caputo: rates.iter().map(|s| s.iter().copied().collect()).collect(),
        cost: problem.cost.value(&terminal),
        rho: None,
        epsilon: None,
    })
}

/// `cost ≤ ρ + ε`.
pub fn epsilon_check(report: &SimReport, rho: f64, eps: f64) -> bool {
    report.cost <= rho + eps
}

/// One row of a partition sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub diam: f64,
    pub cost: f64,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: usize,
    pub wall_time_ms: f64,
}

/// Feedback runs on uniform partitions of the given diameters. Each run uses
/// at least `min_steps` solver cells in total.
pub fn sweep_partitions(
    p: &Position,
    strategy: &dyn Strategy,
    problem: &Problem,
    diams: &[f64],
    min_steps: usize,
    rho: Option<f64>,
) -> Result<Vec<(SimReport, SweepRow)>> {
    if diams.is_empty() {
        return Err(Error::Empty("diameter list"));
    }
    if diams.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::invalid("diameters must be positive"));
    }
    if diams.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("diameters must be non-increasing"));
    }
    let mut out = Vec::with_capacity(diams.len());
    for &diam in diams {
        let partition = Partition::with_diameter(p.t(), p.horizon(), diam)?;
        let k = partition.pieces();
        let spp = min_steps.div_ceil(k).max(1);
        let start = Instant::now();
        let mut report = run_feedback(p, strategy, &partition, problem, spp, None)?;
        let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        if let Some(rho) = rho {
            report = report.with_reference(rho);
        }
        let row = SweepRow {
            diam: partition.diam(),
            cost: report.cost,
            rho: report.rho,
            epsilon: report.epsilon,
            k,
            wall_time_ms,
        };
        out.push((report, row));
    }
    Ok(out)
}

/// Whether `eps` is non-increasing up to a relative band `band` (plus an
/// absolute floor for values at round-off level).
pub fn non_increasing_within(eps: &[f64], band: f64, floor: f64) -> bool {
    eps.windows(2)
        .all(|w| w[1] <= w[0] + band * w[0].abs() + floor)
}
