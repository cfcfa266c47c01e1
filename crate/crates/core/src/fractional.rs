//! Fractional-calculus primitives and the position data model.
//!
//! A position `(t, w(·))` is stored as `w(0)` together with the Caputo
//! derivative of `w` on `[0, t]`, held piecewise constant on cells. Every
//! history value is then recovered exactly through the Riemann–Liouville
//! representation `w(τ) = w(0) + I^α[D^α w](τ)`, with closed-form kernel
//! moments on each cell.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

/// Problem-wide constants: fractional order, horizon and state dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dim: usize,
}

impl ProblemConfig {
    pub fn new(alpha: f64, horizon: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha out of (0,1): {alpha}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "horizon T must be positive, got {horizon}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        Ok(ProblemConfig {
            alpha,
            horizon,
            dim,
        })
    }

    /// `Γ(α + 1)`, the normaliser of the kernel moments.
    pub fn gamma_alpha_plus_one(&self) -> f64 {
        gamma(self.alpha + 1.0)
    }
}

/// Samples of an `n`-vector function at the uniform nodes `0, h, 2h, …, t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    t_end: f64,
    step: f64,
    samples: Vec<DVector<f64>>,
}

impl GridFn {
    pub fn new(t_end: f64, step: f64, samples: Vec<DVector<f64>>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::invalid(format!(
                "bad grid: t_end={t_end}, step={step}"
            )));
        }
        let cells = (t_end / step).round();
        if (cells * step - t_end).abs() > 1e-9 * t_end.max(1.0) {
            return Err(Error::invalid(format!(
                "step {step} does not divide t_end {t_end}"
            )));
        }
        if samples.len() != cells as usize + 1 {
            return Err(Error::DimensionMismatch {
                what: "grid samples",
                expected: cells as usize + 1,
                got: samples.len(),
            });
        }
        let dim = samples[0].len();
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "grid sample",
                    expected: dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("grid samples"));
            }
        }
        Ok(GridFn {
            t_end,
            step,
            samples,
        })
    }

    /// Sample `f` at the nodes of `[0, t_end]` with `cells` equal cells.
    pub fn sample(t_end: f64, cells: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("grid needs at least one cell"));
        }
        let step = t_end / cells as f64;
        let samples = (0..=cells).map(|j| f(j as f64 * step)).collect();
        GridFn::new(t_end, step, samples)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.samples.len() {
            self.t_end
        } else {
            j as f64 * self.step
        }
    }
}

/// `∫_s^e (τ − ξ)^{α−1} dξ · α` for `s ≤ e ≤ τ`.
#[inline]
pub(crate) fn kernel_moment(tau: f64, s: f64, e: f64, alpha: f64) -> f64 {
    (tau - s).powf(alpha) - (tau - e).max(0.0).powf(alpha)
}

/// Riemann–Liouville integral `(1/Γ(α)) ∫_0^τ f(ξ)(τ−ξ)^{α−1} dξ` of grid
/// samples, by product-rectangle quadrature: on each cell the integrand is
/// the mean of its end samples and the kernel is integrated exactly.
pub fn rl_integral(f: &GridFn, alpha: f64, tau: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha out of (0,1): {alpha}")));
    }
    let slack = 1e-12 * f.t_end.max(1.0);
    if !(tau >= 0.0 && tau <= f.t_end + slack) {
        return Err(Error::OutOfRange {
            value: tau,
            lo: 0.0,
            hi: f.t_end,
        });
    }
    let tau = tau.min(f.t_end);
    let norm = gamma(alpha + 1.0);
    let mut acc = DVector::zeros(f.dim());
    for j in 0..f.samples.len() - 1 {
        let s = f.node(j);
        if s >= tau {
            break;
        }
        let e = f.node(j + 1).min(tau);
        let mean = (&f.samples[j] + &f.samples[j + 1]) * 0.5;
        acc += mean * (kernel_moment(tau, s, e, alpha) / norm);
    }
    Ok(acc)
}

/// Piecewise-constant Caputo-derivative history on `[0, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaputoHistory {
    dim: usize,
    breaks: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl CaputoHistory {
    /// History of a position at `t = 0`.
    pub fn empty(dim: usize) -> Self {
        CaputoHistory {
            dim,
            breaks: vec![0.0],
            values: Vec::new(),
        }
    }

    /// Cells `[j h, (j+1) h)` carrying `values[j]`.
    pub fn uniform(dim: usize, step: f64, values: Vec<DVector<f64>>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!(
                "history step must be positive, got {step}"
            )));
        }
        let breaks = (0..=values.len()).map(|j| j as f64 * step).collect();
        CaputoHistory::from_cells(dim, breaks, values)
    }

    /// Constant Caputo derivative `value` on `[0, t]`, split into `cells` cells.
    pub fn constant(t: f64, cells: usize, value: DVector<f64>) -> Result<Self> {
        let dim = value.len();
        if t == 0.0 {
            return Ok(CaputoHistory::empty(dim));
        }
        if cells == 0 {
            return Err(Error::invalid(
                "a non-empty history needs at least one cell",
            ));
        }
        let mut breaks: Vec<f64> = (0..=cells).map(|j| t * j as f64 / cells as f64).collect();
        breaks[cells] = t;
        CaputoHistory::from_cells(dim, breaks, vec![value; cells])
    }

    pub fn from_cells(dim: usize, breaks: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if breaks.len() != values.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "history breakpoints",
                expected: values.len() + 1,
                got: breaks.len(),
            });
        }
        if breaks[0] != 0.0 {
            return Err(Error::invalid("history must start at 0"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid(
                "history breakpoints must be strictly increasing",
            ));
        }
        for v in &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "history value",
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("Caputo history"));
            }
        }
        Ok(CaputoHistory {
            dim,
            breaks,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_end(&self) -> f64 {
        *self.breaks.last().expect("breaks is never empty")
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    /// Appends the cell `[t_end, end)` with constant derivative `value`.
    pub fn push_cell(&mut self, end: f64, value: DVector<f64>) -> Result<()> {
        if !(end > self.t_end()) {
            return Err(Error::invalid(format!(
                "new cell end {end} must exceed history end {}",
                self.t_end()
            )));
        }
        if value.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "history value",
                expected: self.dim,
                got: value.len(),
            });
        }
        self.breaks.push(end);
        self.values.push(value);
        Ok(())
    }

    /// Uniform step if every cell has the same width (to 1e-12 relative).
    pub fn uniform_step(&self) -> Option<f64> {
        let k = self.values.len();
        if k == 0 {
            return None;
        }
        let h = self.t_end() / k as f64;
        let ok = self
            .breaks
            .iter()
            .enumerate()
            .all(|(j, b)| (b - j as f64 * h).abs() <= 1e-12 * self.t_end().max(1.0));
        ok.then_some(h)
    }

    /// `(1/Γ(α)) ∫_0^{min(τ,t)} c(ξ)(τ−ξ)^{α−1} dξ`, exact for the
    /// piecewise-constant history.
    pub fn fractional_integral(&self, alpha: f64, gamma_ap1: f64, tau: f64) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim);
        for (j, c) in self.values.iter().enumerate() {
            let s = self.breaks[j];
            if s >= tau {
                break;
            }
            let e = self.breaks[j + 1].min(tau);
            acc.axpy(kernel_moment(tau, s, e, alpha) / gamma_ap1, c, 1.0);
        }
        acc
    }
}

/// A position `(t, w(·))`: current time and full motion history on `[0, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    config: ProblemConfig,
    t: f64,
    w0: DVector<f64>,
    history: CaputoHistory,
}

impl Position {
    pub fn new(
        config: ProblemConfig,
        t: f64,
        w0: DVector<f64>,
        history: CaputoHistory,
    ) -> Result<Self> {
        if !(t >= 0.0 && t <= config.horizon) {
            return Err(Error::OutOfRange {
                value: t,
                lo: 0.0,
                hi: config.horizon,
            });
        }
        if w0.len() != config.dim {
            return Err(Error::DimensionMismatch {
                what: "initial value w(0)",
                expected: config.dim,
                got: w0.len(),
            });
        }
        if w0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial value w(0)"));
        }
        if history.dim() != config.dim {
            return Err(Error::DimensionMismatch {
                what: "Caputo history",
                expected: config.dim,
                got: history.dim(),
            });
        }
        let mut history = history;
        let end = history.t_end();
        if (end - t).abs() > 1e-9 * config.horizon.max(1.0) {
            return Err(Error::invalid(format!(
                "history ends at {end} but the position time is {t}"
            )));
        }
        if let Some(last) = history.breaks.last_mut() {
            *last = t;
        }
        if t > 0.0 && history.cell_count() == 0 {
            return Err(Error::invalid(
                "a position with t > 0 needs a non-empty history",
            ));
        }
        Ok(Position {
            config,
            t,
            w0,
            history,
        })
    }

    /// The position `(0, w0)`.
    pub fn initial(config: ProblemConfig, w0: DVector<f64>) -> Result<Self> {
        Position::new(config, 0.0, w0, CaputoHistory::empty(config.dim))
    }

    /// Position at time `t` whose history has constant Caputo derivative `c`
    /// (so `w(τ) = w0 + c τ^α / Γ(α+1)`).
    pub fn with_constant_history(
        config: ProblemConfig,
        t: f64,
        w0: DVector<f64>,
        c: DVector<f64>,
        cells: usize,
    ) -> Result<Self> {
        let history = CaputoHistory::constant(t, cells, c)?;
        Position::new(config, t, w0, history)
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn w0(&self) -> &DVector<f64> {
        &self.w0
    }

    pub fn history(&self) -> &CaputoHistory {
        &self.history
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Whether the position lies in `G^0` (`t < T`).
    pub fn is_interior(&self) -> bool {
        self.t < self.config.horizon
    }

    fn raw_extension(&self, tau: f64) -> DVector<f64> {
        let g = self.config.gamma_alpha_plus_one();
        &self.w0 + self.history.fractional_integral(self.config.alpha, g, tau)
    }

    /// The history value `w(τ)` for `τ ∈ [0, t]`.
    pub fn w_at(&self, tau: f64) -> Result<DVector<f64>> {
        if !(tau >= 0.0 && tau <= self.t) {
            return Err(Error::OutOfRange {
                value: tau,
                lo: 0.0,
                hi: self.t,
            });
        }
        Ok(self.raw_extension(tau))
    }

    /// Current state `w(t)`.
    pub fn current(&self) -> DVector<f64> {
        self.raw_extension(self.t)
    }

    /// The free-drift continuation `a(τ | t, w)`: the history itself on
    /// `[0, t]`, and the continuation with zero Caputo derivative after `t`.
    pub fn extension_a(&self, tau: f64) -> Result<DVector<f64>> {
        if !(tau >= 0.0 && tau <= self.config.horizon) {
            return Err(Error::OutOfRange {
                value: tau,
                lo: 0.0,
                hi: self.config.horizon,
            });
        }
        Ok(self.raw_extension(tau))
    }

    /// `a(T | t, w)`.
    pub fn terminal_drift(&self) -> DVector<f64> {
        self.raw_extension(self.config.horizon)
    }

    /// Continuation with constant Caputo derivative `f` after `t`.
    pub fn extension_xf(&self, f: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        if !self.is_interior() {
            return Err(Error::invalid("x^(f) extension needs t < T"));
        }
        self.check_direction(f)?;
        let mut x = self.extension_a(tau)?;
        if tau > self.t {
            let scale = (tau - self.t).powf(self.config.alpha) / self.config.gamma_alpha_plus_one();
            x.axpy(scale, f, 1.0);
        }
        Ok(x)
    }

    /// The position `(t + δ, x^{(f)}_{t+δ})`: the history extended by one
    /// cell of constant Caputo derivative `f`.
    pub fn shifted(&self, f: &DVector<f64>, delta: f64) -> Result<Position> {
        if !self.is_interior() {
            return Err(Error::invalid("cannot shift a terminal position"));
        }
        self.check_direction(f)?;
        if !(delta > 0.0 && self.t + delta <= self.config.horizon) {
            return Err(Error::invalid(format!(
                "shift {delta} must be positive and stay within the horizon"
            )));
        }
        let mut history = self.history.clone();
        history.push_cell(self.t + delta, f.clone())?;
        Position::new(self.config, self.t + delta, self.w0.clone(), history)
    }

    fn check_direction(&self, f: &DVector<f64>) -> Result<()> {
        if f.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                what: "direction",
                expected: self.config.dim,
                got: f.len(),
            });
        }
        Ok(())
    }

    /// The metric `|t − t'| + max_τ ‖w(min{τ,t}) − w'(min{τ,t'})‖`, with the
    /// maximum taken over the merged breakpoints of both histories.
    pub fn dist(&self, other: &Position) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                what: "positions",
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let mut nodes: Vec<f64> = self
            .history
            .breaks
            .iter()
            .chain(other.history.breaks.iter())
            .copied()
            .chain([self.t, other.t])
            .collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        nodes.dedup();
        let sup = nodes
            .iter()
            .map(|&tau| {
                let a = self.raw_extension(tau.min(self.t));
                let b = other.raw_extension(tau.min(other.t));
                (a - b).norm()
            })
            .fold(0.0, f64::max);
        Ok((self.t - other.t).abs() + sup)
    }

    pub fn to_json(&self) -> PositionJson {
        let caputo = self
            .history
            .values
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect();
        let (step, breaks) = match self.history.uniform_step() {
            Some(h) => (Some(h), None),
            None if self.history.cell_count() == 0 => (None, None),
            None => (None, Some(self.history.breaks.clone())),
        };
        PositionJson {
            alpha: self.config.alpha,
            horizon: self.config.horizon,
            t: self.t,
            w0: self.w0.iter().copied().collect(),
            step,
            breaks,
            caputo,
        }
    }

    pub fn from_json(json: &PositionJson) -> Result<Position> {
        let config = ProblemConfig::new(json.alpha, json.horizon, json.w0.len())?;
        let w0 = DVector::from_vec(json.w0.clone());
        let values: Vec<DVector<f64>> = json
            .caputo
            .iter()
            .map(|v| DVector::from_vec(v.clone()))
            .collect();
        let history = if values.is_empty() {
            CaputoHistory::empty(config.dim)
        } else {
            match (&json.breaks, json.step) {
                (Some(b), _) => CaputoHistory::from_cells(config.dim, b.clone(), values)?,
                (None, Some(h)) => CaputoHistory::uniform(config.dim, h, values)?,
                (None, None) => {
                    return Err(Error::invalid("position JSON needs `step` or `breaks`"))
                }
            }
        };
        Position::new(config, json.t, w0, history)
    }
}

/// Serialized position: `{alpha, T, t, w0, step, caputo}`, where `caputo`
/// holds one Caputo-derivative vector per history cell. Non-uniform
/// histories carry explicit `breaks` instead of `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionJson {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t: f64,
    pub w0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaks: Option<Vec<f64>>,
    #[serde(default)]
    pub caputo: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ProblemConfig {
        ProblemConfig::new(0.5, 1.0, 1).unwrap()
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn config_validation() {
        assert!(ProblemConfig::new(1.5, 1.0, 1).is_err());
        assert!(ProblemConfig::new(0.0, 1.0, 1).is_err());
        assert!(ProblemConfig::new(0.5, 0.0, 1).is_err());
        assert!(ProblemConfig::new(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn rl_integral_power_rule() {
        let zero = GridFn::sample(1.0, 64, |_| v(0.0)).unwrap();
        assert_eq!(rl_integral(&zero, 0.5, 1.0).unwrap()[0], 0.0);

        let one = GridFn::sample(1.0, 64, |_| v(1.0)).unwrap();
        let got = rl_integral(&one, 0.5, 1.0).unwrap()[0];
        assert!((got - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-13);

        let lin = GridFn::sample(1.0, 4096, v).unwrap();
        let got = rl_integral(&lin, 0.5, 1.0).unwrap()[0];
        let exact = 1.0 / gamma(2.5);
        assert!((exact - 0.752_252_778_063_675).abs() < 1e-12);
        assert!((got - exact).abs() < 1e-5, "{got} vs {exact}");
    }

    #[test]
    fn rl_integral_rejects_out_of_grid() {
        let one = GridFn::sample(0.5, 8, |_| v(1.0)).unwrap();
        assert!(rl_integral(&one, 0.5, 0.75).is_err());
        assert!(rl_integral(&one, 0.5, -0.1).is_err());
    }

    #[test]
    fn grid_rejects_non_finite() {
        let samples = vec![v(0.0), v(f64::NAN)];
        assert!(matches!(
            GridFn::new(1.0, 1.0, samples),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn extension_a_at_t_zero_is_w0() {
        let p = Position::initial(cfg(), v(0.7)).unwrap();
        for tau in [0.0, 0.3, 1.0] {
            assert_eq!(p.extension_a(tau).unwrap()[0], 0.7);
        }
        assert!(p.extension_a(1.2).is_err());
    }

    #[test]
    fn extension_a_constant_history_closed_form() {
        let (t, c, w0) = (0.4, 1.3, -0.2);
        let p = Position::with_constant_history(cfg(), t, v(w0), v(c), 37).unwrap();
        let g = gamma(1.5);
        for tau in [0.5f64, 0.8, 1.0] {
            let exact = w0 + c * (tau.powf(0.5) - (tau - t).powf(0.5)) / g;
            assert!((p.extension_a(tau).unwrap()[0] - exact).abs() < 1e-13);
        }
        // restriction branch: w(τ) = w0 + c τ^α / Γ(α+1)
        let exact = w0 + c * 0.25f64.powf(0.5) / g;
        assert!((p.extension_a(0.25).unwrap()[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn extension_a_is_continuous_at_t() {
        let p = Position::with_constant_history(cfg(), 0.3, v(0.1), v(-0.8), 10).unwrap();
        let left = p.w_at(0.3).unwrap()[0];
        let right = p.extension_a(0.3 + 1e-12).unwrap()[0];
        assert!((left - right).abs() < 1e-5);
    }

    #[test]
    fn extension_xf_cases() {
        let p = Position::initial(cfg(), v(0.0)).unwrap();
        let got = p.extension_xf(&v(1.0), 1.0).unwrap()[0];
        assert!((got - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-13);

        let q = Position::with_constant_history(cfg(), 0.5, v(0.2), v(0.4), 8).unwrap();
        for tau in [0.2, 0.5, 0.7, 1.0] {
            assert_eq!(
                q.extension_xf(&v(0.0), tau).unwrap(),
                q.extension_a(tau).unwrap()
            );
        }
        assert_eq!(q.extension_xf(&v(3.0), 0.5).unwrap(), q.current());

        let terminal = Position::with_constant_history(cfg(), 1.0, v(0.0), v(1.0), 4).unwrap();
        assert!(terminal.extension_xf(&v(1.0), 1.0).is_err());
    }

    #[test]
    fn shifted_position_matches_extension() {
        let p = Position::with_constant_history(cfg(), 0.25, v(0.3), v(-0.5), 5).unwrap();
        let f = v(2.0);
        let q = p.shifted(&f, 0.1).unwrap();
        assert!((q.t() - 0.35).abs() < 1e-15);
        for tau in [0.1, 0.25, 0.3, 0.35] {
            let a = q.w_at(tau).unwrap();
            let b = p.extension_xf(&f, tau).unwrap();
            assert!((a - b).norm() < 1e-13, "tau={tau}");
        }
    }

    #[test]
    fn dist_examples() {
        let p = Position::with_constant_history(cfg(), 0.2, v(1.0), v(0.0), 4).unwrap();
        let q = Position::with_constant_history(cfg(), 0.4, v(1.0), v(0.0), 8).unwrap();
        assert_eq!(p.dist(&p).unwrap(), 0.0);
        assert!((p.dist(&q).unwrap() - 0.2).abs() < 1e-15);

        let shifted = Position::with_constant_history(cfg(), 0.2, v(1.5), v(0.0), 4).unwrap();
        assert!(p.dist(&shifted).unwrap() >= 0.5 - 1e-15);

        let other_dim =
            Position::initial(ProblemConfig::new(0.5, 1.0, 2).unwrap(), DVector::zeros(2)).unwrap();
        assert!(p.dist(&other_dim).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = Position::with_constant_history(cfg(), 0.5, v(0.1), v(0.9), 16).unwrap();
        let text = serde_json::to_string(&p.to_json()).unwrap();
        assert!(text.contains("\"T\":1.0"));
        let back: PositionJson = serde_json::from_str(&text).unwrap();
        let q = Position::from_json(&back).unwrap();
        assert_eq!(q.t(), p.t());
        assert!(p.dist(&q).unwrap() < 1e-14);

        let shifted = p.shifted(&v(1.0), 0.01).unwrap();
        let json = shifted.to_json();
        assert!(json.breaks.is_some());
        let back = Position::from_json(&json).unwrap();
        assert_eq!(back, shifted);
    }

    #[test]
    fn json_requires_consistent_history() {
        let bad = r#"{"alpha":0.5,"T":1.0,"t":0.5,"w0":[0.0],"step":0.1,"caputo":[[1.0]]}"#;
        let json: PositionJson = serde_json::from_str(bad).unwrap();
        assert!(Position::from_json(&json).is_err());
        let unknown = r#"{"alpha":0.5,"T":1.0,"t":0.0,"w0":[0.0],"extra":1}"#;
        assert!(serde_json::from_str::<PositionJson>(unknown).is_err());
    }
}
