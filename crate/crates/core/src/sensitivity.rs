//! Order-α sensitivities of `ψ(t, w, ν) = σ(y(1 | t, w, ν))`.
//!
//! The pair `(z, Z)` solves the linear equations
//!
//! ```text
//! z(ϑ) = q(ϑ) + 1/Γ(α) ∫_0^ϑ (A*(ζ) z(ζ) + b*(ζ)) (ϑ−ζ)^{α−1} dζ
//! Z(ϑ) = Q(ϑ) + 1/Γ(α) ∫_0^ϑ  A*(ζ) Z(ζ)          (ϑ−ζ)^{α−1} dζ
//! ```
//!
//! whose solutions behave like `ϑ^{α−1}` at the origin. Both are solved on
//! the graded mesh `ϑ_j = (j/m)^{1/α}`. On each cell the integrand is taken
//! as `ζ^{α−1}` times its regularised value at the right node, and the
//! factor `ζ^{α−1}` is replaced by its cell mean.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ControlSet, CostFn, Dynamics};
use crate::error::{Error, Result};
use crate::fractional::Position;
use crate::relaxed::{solve_auxiliary_with_forcing, AuxSolution, RelaxedControl};
use crate::special::gamma;
use crate::volterra::{graded_nodes, ProductWeights};

pub const DEFAULT_MESH: usize = 2048;

/// Samples of `ϑ^{1−α} v(ϑ)` at the graded nodes `ϑ_1, …, ϑ_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularGridFn {
    alpha: f64,
    nodes: Vec<f64>,
    regularized: Vec<DMatrix<f64>>,
}

impl SingularGridFn {
    /// Graded nodes `ϑ_1, …, ϑ_m` (the origin is excluded).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn regularized(&self) -> &[DMatrix<f64>] {
        &self.regularized
    }

    /// `v(ϑ_k)` for `k = 1..=m`.
    pub fn value(&self, k: usize) -> DMatrix<f64> {
        &self.regularized[k - 1] / self.nodes[k - 1].powf(1.0 - self.alpha)
    }

    pub fn endpoint(&self) -> &DMatrix<f64> {
        // ϑ_m = 1
        self.regularized.last().expect("mesh is non-empty")
    }

    /// `max_k ϑ_k^{1−α} ‖v(ϑ_k)‖`.
    pub fn regularized_sup(&self) -> f64 {
        self.regularized
            .iter()
            .map(|m| m.norm())
            .fold(0.0, f64::max)
    }
}

/// `(z, Z)` together with the auxiliary solution they linearise around.
#[derive(Debug, Clone)]
pub struct SensitivitySolution {
    pub y: AuxSolution,
    pub z: SingularGridFn,
    pub big_z: SingularGridFn,
}

impl SensitivitySolution {
    pub fn z1(&self) -> DVector<f64> {
        self.z.endpoint().column(0).into_owned()
    }

    pub fn big_z1(&self) -> DMatrix<f64> {
        self.big_z.endpoint().clone()
    }
}

/// Value of `ψ` with its order-α derivatives `(∂_t^α ψ, ∇^α ψ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub grad: DVector<f64>,
}

impl Jet {
    /// `∂_t^α ψ + ⟨∇^α ψ, f⟩`.
    pub fn along(&self, f: &DVector<f64>) -> f64 {
        self.dt + self.grad.dot(f)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::OutOfRange {
            value: theta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// `q(ϑ)`: the rate of change of the free drift along the time change,
/// `−((1−α)(1−ϑ)/Γ(α)) ∫_0^t D^α w(ξ) (s−ξ)^{α−2} dξ` with
/// `s = t + ϑ(T−t)`, integrated exactly on each history cell.
pub fn forcing_q(p: &Position, theta: f64) -> Result<DVector<f64>> {
    check_theta(theta)?;
    if !p.is_interior() {
        return Err(Error::invalid("q needs t < T"));
    }
    Ok(q_unchecked(p, gamma(p.alpha()), theta))
}

fn q_unchecked(p: &Position, gamma_alpha: f64, theta: f64) -> DVector<f64> {
    let alpha = p.alpha();
    let s = p.t() + theta * (p.horizon() - p.t());
    let h = p.history();
    let breaks = h.breaks();
    let mut acc = DVector::zeros(p.dim());
    if theta == 1.0 {
        return acc;
    }
    // (s − b)^{α−1} at each break, shared by neighbouring cells
    let mut left = (s - breaks[0]).powf(alpha - 1.0);
    for (j, c) in h.values().iter().enumerate() {
        let right = (s - breaks[j + 1]).powf(alpha - 1.0);
        acc.axpy(left - right, c, 1.0);
        left = right;
    }
    acc * ((1.0 - theta) / gamma_alpha)
}

/// `Q(ϑ) = Id / (Γ(α) ϑ^{1−α} (T−t)^{1−α})`.
pub fn forcing_big_q(p: &Position, theta: f64) -> Result<DMatrix<f64>> {
    check_theta(theta)?;
    if !p.is_interior() {
        return Err(Error::invalid("Q needs t < T"));
    }
    let k = big_q_factor(p, gamma(p.alpha())) / theta.powf(1.0 - p.alpha());
    Ok(DMatrix::identity(p.dim(), p.dim()) * k)
}

/// `ϑ^{1−α} Q(ϑ)`, a multiple of the identity.
fn big_q_factor(p: &Position, gamma_alpha: f64) -> f64 {
    1.0 / (gamma_alpha * (p.horizon() - p.t()).powf(1.0 - p.alpha()))
}

/// `A = (T−t)^α ∂f/∂x` and `b = (1−ϑ)(T−t)^α ∂f/∂τ − α f/(T−t)^{1−α}`, all at
/// `(t + ϑ(T−t), y(ϑ), u)`.
pub fn coeffs_a_b(
    p: &Position,
    y: &AuxSolution,
    dynamics: &Dynamics,
    theta: f64,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::OutOfRange {
            value: theta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let state = y.at(theta)?;
    Ok(coeffs_at(p, dynamics, theta, state, u))
}

fn coeffs_at(
    p: &Position,
    dynamics: &Dynamics,
    theta: f64,
    state: &DVector<f64>,
    u: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let alpha = p.alpha();
    let span = p.horizon() - p.t();
    let tau = (p.t() + theta * span).min(p.horizon());
    let sa = span.powf(alpha);
    let a = dynamics.d_x(tau, state, u) * sa;
    let mut b = dynamics.d_tau(tau, state, u) * ((1.0 - theta) * sa);
    b.axpy(
        -alpha / span.powf(1.0 - alpha),
        &dynamics.rhs(tau, state, u),
        1.0,
    );
    (a, b)
}

/// Probability-weighted means of per-control coefficients.
pub fn coeffs_star(
    weights: &[f64],
    per_point: &[(DMatrix<f64>, DVector<f64>)],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if weights.len() != per_point.len() {
        return Err(Error::DimensionMismatch {
            what: "probability weights",
            expected: per_point.len(),
            got: weights.len(),
        });
    }
    let (a0, b0) = per_point.first().ok_or(Error::Empty("coefficient list"))?;
    let mut a = DMatrix::zeros(a0.nrows(), a0.ncols());
    let mut b = DVector::zeros(b0.len());
    for (w, (ai, bi)) in weights.iter().zip(per_point) {
        if *w != 0.0 {
            a += ai * *w;
            b.axpy(*w, bi, 1.0);
        }
    }
    Ok((a, b))
}

/// Mesh data that depends only on the position: nodes, weights, the free
/// drift and the forcing terms. Reused across controls.
#[derive(Debug, Clone)]
pub struct SensitivityMesh {
    position: Position,
    weights: ProductWeights,
    drift: Vec<DVector<f64>>,
    // q(ϑ_k) for k = 1..=m
    q: Vec<DVector<f64>>,
    // ϑ^{1−α} Q(ϑ) as a scalar
    big_q: f64,
    // mean of ζ^{α−1} over cell j, times ϑ_{j+1}^{1−α}
    cell_factor: Vec<f64>,
}

impl SensitivityMesh {
    pub fn new(p: &Position, m: usize) -> Result<Self> {
        if !p.is_interior() {
            return Err(Error::invalid("sensitivities need t < T"));
        }
        if m < 8 {
            return Err(Error::invalid(format!(
                "graded mesh needs at least 8 cells, got {m}"
            )));
        }
        let alpha = p.alpha();
        let nodes = graded_nodes(alpha, m);
        let (t, horizon) = (p.t(), p.horizon());
        let drift = nodes
            .iter()
            .map(|&th| p.extension_a((t + th * (horizon - t)).min(horizon)))
            .collect::<Result<Vec<_>>>()?;
        let ga = gamma(alpha);
        let q = nodes[1..]
            .iter()
            .map(|&th| q_unchecked(p, ga, th))
            .collect();
        let cell_factor = nodes
            .windows(2)
            .map(|w| {
                let mean = (w[1].powf(alpha) - w[0].powf(alpha)) / (alpha * (w[1] - w[0]));
                mean * w[1].powf(1.0 - alpha)
            })
            .collect();
        Ok(SensitivityMesh {
            position: p.clone(),
            weights: ProductWeights::new(alpha, nodes),
            drift,
            q,
            big_q: big_q_factor(p, ga),
            cell_factor,
        })
    }

    pub fn position(&self) -> &Position {
        &self.position
    }

    pub fn cells(&self) -> usize {
        self.cell_factor.len()
    }

    pub fn solve(
        &self,
        nu: &RelaxedControl,
        dynamics: &Dynamics,
        controls: &ControlSet,
    ) -> Result<SensitivitySolution> {
        let p = &self.position;
        let y = solve_auxiliary_with_forcing(
            p,
            nu,
            dynamics,
            controls,
            self.weights.clone(),
            &self.drift,
        )?;
        let n = p.dim();
        let m = self.cells();
        let nodes = self.weights.nodes();
        let alpha = p.alpha();

        // A*, b* on each cell at its right node
        let mut a_star = Vec::with_capacity(m);
        let mut b_star = Vec::with_capacity(m);
        for j in 0..m {
            let theta = nodes[j + 1];
            let w = nu.weights_at(0.5 * (nodes[j] + nodes[j + 1]));
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for (wi, u) in w.iter().zip(controls.points()) {
                if *wi != 0.0 {
                    let (ai, bi) = coeffs_at(p, dynamics, theta, &y.samples()[j + 1], u);
                    a += ai * *wi;
                    b.axpy(*wi, &bi, 1.0);
                }
            }
            a_star.push(a);
            b_star.push(b);
        }

        // unknown U_k = [z_k | Z_k], an n × (n+1) block
        let cols = n + 1;
        let block = n * cols;
        let mut v = vec![0.0; m * block];
        let mut regular_z = Vec::with_capacity(m);
        let mut regular_big_z = Vec::with_capacity(m);
        let identity = DMatrix::<f64>::identity(n, n);
        for k in 1..=m {
            let row = self.weights.row(k).expect("graded nodes are non-uniform");
            let mut rhs = vec![0.0; block];
            for (j, w) in row[..k - 1].iter().enumerate() {
                let vj = &v[j * block..(j + 1) * block];
                for (r, x) in rhs.iter_mut().zip(vj) {
                    *r += w * x;
                }
            }
            let mut rhs = DMatrix::from_column_slice(n, cols, &rhs);
            let theta = nodes[k];
            let reg = theta.powf(1.0 - alpha);
            {
                let mut zc = rhs.column_mut(0);
                zc += &self.q[k - 1];
                let wb = row[k - 1] * self.cell_factor[k - 1];
                zc.axpy(wb, &b_star[k - 1], 1.0);
            }
            let qk = self.big_q / reg;
            for i in 0..n {
                rhs[(i, i + 1)] += qk;
            }
            let c = row[k - 1] * self.cell_factor[k - 1];
            let lhs = &identity - &a_star[k - 1] * c;
            let u = lhs.lu().solve(&rhs).ok_or(Error::SingularStep(k))?;
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("sensitivity"));
            }
            // v_{k−1} = γ (A* U_k + [b* | 0])
            let mut vk = &a_star[k - 1] * &u;
            {
                let mut c0 = vk.column_mut(0);
                c0 += &b_star[k - 1];
            }
            vk *= self.cell_factor[k - 1];
            v[(k - 1) * block..k * block].copy_from_slice(vk.as_slice());
            let scaled = &u * reg;
            regular_z.push(scaled.columns(0, 1).into_owned());
            regular_big_z.push(scaled.columns(1, n).into_owned());
        }
        let graded = nodes[1..].to_vec();
        Ok(SensitivitySolution {
            y,
            z: SingularGridFn {
                alpha,
                nodes: graded.clone(),
                regularized: regular_z,
            },
            big_z: SingularGridFn {
                alpha,
                nodes: graded,
                regularized: regular_big_z,
            },
        })
    }

    /// `ψ` and its derivatives from one solve.
    pub fn jet(
        &self,
        nu: &RelaxedControl,
        dynamics: &Dynamics,
        controls: &ControlSet,
        cost: &CostFn,
    ) -> Result<Jet> {
        let sol = self.solve(nu, dynamics, controls)?;
        Ok(jet_from(&sol, cost))
    }
}

fn jet_from(sol: &SensitivitySolution, cost: &CostFn) -> Jet {
    let y1 = sol.y.endpoint();
    let ds = cost.gradient(y1);
    Jet {
        value: cost.value(y1),
        dt: ds.dot(&sol.z1()),
        grad: sol.big_z1().transpose() * ds,
    }
}

/// `z` on the graded mesh with `m` cells.
pub fn solve_z(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    m: usize,
) -> Result<SingularGridFn> {
    Ok(SensitivityMesh::new(p, m)?.solve(nu, dynamics, controls)?.z)
}

/// `Z` on the graded mesh with `m` cells.
pub fn solve_big_z(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    m: usize,
) -> Result<SingularGridFn> {
    Ok(SensitivityMesh::new(p, m)?
        .solve(nu, dynamics, controls)?
        .big_z)
}

pub fn sensitivity(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    m: usize,
) -> Result<SensitivitySolution> {
    SensitivityMesh::new(p, m)?.solve(nu, dynamics, controls)
}

/// `ψ(t, w, ν) = σ(y(1))` with `y` solved on `steps` equal cells.
pub fn psi(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    cost: &CostFn,
    steps: usize,
) -> Result<f64> {
    let y = crate::relaxed::solve_auxiliary_y(p, nu, dynamics, controls, steps)?;
    Ok(cost.value(y.endpoint()))
}

/// `(∂_t^α ψ, ∇^α ψ) = (⟨σ'(y(1)), z(1)⟩, Z(1)ᵀ σ'(y(1)))`.
pub fn psi_derivatives(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    cost: &CostFn,
    m: usize,
) -> Result<Jet> {
    SensitivityMesh::new(p, m)?.jet(nu, dynamics, controls, cost)
}

/// `[ψ(t+δ, x^{(f)}_{t+δ}, ν) − ψ(t, w, ν)] / δ`.
#[allow(clippy::too_many_arguments)]
pub fn fd_directional_psi(
    p: &Position,
    nu: &RelaxedControl,
    dynamics: &Dynamics,
    controls: &ControlSet,
    cost: &CostFn,
    f: &DVector<f64>,
    delta: f64,
    steps: usize,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 0.5 * (p.horizon() - p.t())) {
        return Err(Error::invalid(format!(
            "shift {delta} must lie in (0, (T − t)/2]"
        )));
    }
    let shifted = p.shifted(f, delta)?;
    let base = psi(p, nu, dynamics, controls, cost, steps)?;
    let moved = psi(&shifted, nu, dynamics, controls, cost, steps)?;
    Ok((moved - base) / delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::ProblemConfig;
    use crate::problem::{GFunction, Problem};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn q_vanishes_without_history_and_at_one() {
        let cfg = ProblemConfig::new(0.5, 1.0, 1).unwrap();
        let p0 = Position::initial(cfg, v(0.3)).unwrap();
        assert_eq!(forcing_q(&p0, 0.4).unwrap()[0], 0.0);
        let p = Position::with_constant_history(cfg, 0.4, v(0.0), v(1.2), 7).unwrap();
        assert_eq!(forcing_q(&p, 1.0).unwrap()[0], 0.0);
        assert!(forcing_q(&p, 0.0).is_err());
    }

    #[test]
    fn q_matches_constant_history_closed_form() {
        let alpha = 0.35;
        let cfg = ProblemConfig::new(alpha, 2.0, 1).unwrap();
        let (t, c) = (0.6, -0.8);
        let p = Position::with_constant_history(cfg, t, v(1.0), v(c), 13).unwrap();
        for theta in [0.01, 0.3, 0.77] {
            let s = t + theta * (2.0 - t);
            let expect =
                (1.0 - theta) * c * (s.powf(alpha - 1.0) - (theta * (2.0 - t)).powf(alpha - 1.0))
                    / gamma(alpha);
            let got = forcing_q(&p, theta).unwrap()[0];
            assert!(
                (got - expect).abs() < 1e-12 * expect.abs().max(1.0),
                "{got} vs {expect}"
            );
        }
    }

    #[test]
    fn big_q_at_one() {
        let cfg = ProblemConfig::new(0.5, 1.0, 2).unwrap();
        let p = Position::initial(cfg, DVector::zeros(2)).unwrap();
        let q = forcing_big_q(&p, 1.0).unwrap();
        assert!((q[(0, 0)] - 1.0 / PI.sqrt()).abs() < 1e-13);
        assert_eq!(q[(0, 1)], 0.0);
        let a = forcing_big_q(&p, 0.25).unwrap()[(0, 0)] * 0.25f64.sqrt();
        assert!((a - q[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn example_coefficients() {
        let prob = Problem::example(0.5, 1.0, GFunction::One).unwrap();
        let p = Position::initial(prob.config, v(0.0)).unwrap();
        let nu = RelaxedControl::dirac((0.0, 1.0), 3, 2).unwrap();
        let y =
            crate::relaxed::solve_auxiliary_y(&p, &nu, &prob.dynamics, &prob.controls, 16).unwrap();
        let (a, b) = coeffs_a_b(&p, &y, &prob.dynamics, 0.5, &v(1.0)).unwrap();
        assert_eq!(a[(0, 0)], 0.0);
        assert!((b[0] + 0.5 * PI.sqrt()).abs() < 1e-12);
        assert!(coeffs_a_b(&p, &y, &prob.dynamics, 0.51, &v(1.0)).is_err());
        let pts = vec![
            (a.clone(), -b.clone()),
            (a.clone(), DVector::zeros(1)),
            (a.clone(), b.clone()),
        ];
        let (sa, sb) = coeffs_star(&[0.5, 0.0, 0.5], &pts).unwrap();
        assert_eq!(sa[(0, 0)], 0.0);
        assert_eq!(sb[0], 0.0);
        assert!(coeffs_star(&[1.0], &pts).is_err());
    }

    #[test]
    fn constant_b_gives_power_rule() {
        // A ≡ 0, q ≡ 0, b* ≡ −α Γ(α): z(1) = −αΓ(α)/Γ(α+1) = −1
        let prob = Problem::example(0.5, 1.0, GFunction::One).unwrap();
        let p = Position::initial(prob.config, v(0.0)).unwrap();
        let nu = RelaxedControl::dirac((0.0, 1.0), 3, 2).unwrap();
        let sol = sensitivity(&p, &nu, &prob.dynamics, &prob.controls, 512).unwrap();
        assert!((sol.z1()[0] + 1.0).abs() < 1e-2, "{}", sol.z1()[0]);
        assert!((sol.big_z1()[(0, 0)] - 1.0 / PI.sqrt()).abs() < 1e-14);
        assert!(sol.z.regularized_sup().is_finite());
    }

    #[test]
    fn zero_control_gives_zero_z() {
        let prob = Problem::example(0.5, 1.0, GFunction::Cos).unwrap();
        let p = Position::initial(prob.config, v(0.7)).unwrap();
        let nu = RelaxedControl::dirac((0.0, 1.0), 3, 1).unwrap();
        let sol = sensitivity(&p, &nu, &prob.dynamics, &prob.controls, 64).unwrap();
        assert!(sol.z.regularized().iter().all(|m| m[(0, 0)] == 0.0));
    }

    #[test]
    fn constant_a_matches_resolvent() {
        let alpha = 0.5;
        for a0 in [-1.0, 0.5] {
            let dynamics = Dynamics::new(
                1,
                1,
                Arc::new(move |_, x, _| x * a0),
                Arc::new(|_, _, _| DVector::zeros(1)),
                Arc::new(move |_, _, _| DMatrix::from_element(1, 1, a0)),
                a0.abs(),
            )
            .unwrap();
            let controls = ControlSet::uniform_1d(0.0, 0.0, 1).unwrap();
            let cfg = ProblemConfig::new(alpha, 1.0, 1).unwrap();
            let p = Position::initial(cfg, v(0.0)).unwrap();
            let nu = RelaxedControl::dirac((0.0, 1.0), 1, 0).unwrap();
            let z = solve_big_z(&p, &nu, &dynamics, &controls, 1024).unwrap();
            let expect = crate::special::mittag_leffler(alpha, alpha, a0).unwrap();
            let got = z.endpoint()[(0, 0)];
            assert!((got - expect).abs() < 1e-2, "a0={a0}: {got} vs {expect}");
        }
    }

    #[test]
    fn fd_quotient_example() {
        let prob = Problem::example(0.5, 1.0, GFunction::One).unwrap();
        let p = Position::initial(prob.config, v(0.0)).unwrap();
        let nu = RelaxedControl::dirac((0.0, 1.0), 3, 2).unwrap();
        let f = v(1.0);
        let fd = fd_directional_psi(
            &p,
            &nu,
            &prob.dynamics,
            &prob.controls,
            &prob.cost,
            &f,
            1e-3,
            512,
        )
        .unwrap();
        let expect = 4.0 - 4.0 / PI.sqrt();
        assert!((fd - expect).abs() < 0.02 * expect, "{fd}");
        assert!(fd_directional_psi(
            &p,
            &nu,
            &prob.dynamics,
            &prob.controls,
            &prob.cost,
            &f,
            0.6,
            64
        )
        .is_err());
    }
}
