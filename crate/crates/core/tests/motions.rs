use fracfb::dynamics::{solve_motion, solve_motion_relaxed, Motion, PiecewiseControl};
use fracfb::fractional::{CaputoHistory, Position};
use fracfb::problem::{GFunction, Problem};
use fracfb::relaxed::lift_ordinary;
use fracfb::special::{gamma, growth_radius};
use nalgebra::DVector;
use proptest::prelude::*;

fn problem(which: usize, alpha: f64) -> Problem {
    let name = ["example-g", "damped", "oscillator"][which];
    Problem::named(name, alpha, 1.0, Some(GFunction::Cos), None).unwrap()
}

fn start(problem: &Problem, t: f64, w0: f64, caputo: &[f64]) -> Position {
    let n = problem.config.dim;
    let w0 = DVector::from_element(n, w0);
    if t == 0.0 {
        return Position::initial(problem.config, w0).unwrap();
    }
    let cells = caputo.len();
    let breaks = (0..=cells).map(|j| t * j as f64 / cells as f64).collect();
    let values = caputo
        .iter()
        .map(|&c| DVector::from_element(n, c))
        .collect();
    let history = CaputoHistory::from_cells(n, breaks, values).unwrap();
    Position::new(problem.config, t, w0, history).unwrap()
}

fn sup_norm(m: &Motion) -> f64 {
    m.states().iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// `max_k |x_k − a(s_k) − I^α[r](s_k)|` with `r` interpolated linearly on each
/// cell from the right-hand side at the two end nodes.
fn residual(problem: &Problem, m: &Motion, u: &PiecewiseControl) -> f64 {
    let alpha = problem.config.alpha;
    let g = gamma(alpha);
    let s = m.times();
    let x = m.states();
    let mut worst = 0.0f64;
    for k in 1..s.len() {
        let mut integral = DVector::zeros(x[0].len());
        for j in 0..k {
            let u_j = problem.controls.point(u.index_at(0.5 * (s[j] + s[j + 1])));
            let left = problem.dynamics.rhs(s[j], &x[j], u_j);
            let right = problem.dynamics.rhs(s[j + 1], &x[j + 1], u_j);
            let (da, db) = (s[k] - s[j], s[k] - s[j + 1]);
            let m0 = (da.powf(alpha) - db.powf(alpha)) / alpha;
            let m1 = da * m0 - (da.powf(alpha + 1.0) - db.powf(alpha + 1.0)) / (alpha + 1.0);
            let slope = (&right - &left) / (s[j + 1] - s[j]);
            integral += (left * m0 + slope * m1) / g;
        }
        let a = m.start().extension_a(s[k]).unwrap();
        worst = worst.max((&x[k] - a - integral).norm());
    }
    worst
}

#[test]
fn volterra_residual_decays() {
    // measured max of r·steps^α was 0.092 (oscillator, 32 steps)
    const C: f64 = 0.12;
    for which in [1, 2] {
        let problem = problem(which, 0.6);
        let p = start(&problem, 0.25, 0.4, &[0.3, -0.5]);
        let u =
            PiecewiseControl::equal_pieces(0.25, 1.0, vec![0, 2, 1], &problem.controls).unwrap();
        for steps in [32usize, 64, 128] {
            let m = solve_motion(&p, &u, &problem.dynamics, &problem.controls, steps).unwrap();
            let r = residual(&problem, &m, &u);
            assert!(
                r <= C * (steps as f64).powf(-0.6),
                "{} steps {steps}: residual {r}",
                problem.name
            );
        }
    }
}

#[test]
fn doubling_steps_reduces_error() {
    for which in [1, 2] {
        let problem = problem(which, 0.5);
        let p = start(&problem, 0.0, 0.5, &[]);
        let u = PiecewiseControl::constant(0.0, 1.0, 2, &problem.controls).unwrap();
        let reference = solve_motion(&p, &u, &problem.dynamics, &problem.controls, 8192).unwrap();
        let errors: Vec<f64> = [128usize, 256, 512]
            .into_iter()
            .map(|n| {
                let m = solve_motion(&p, &u, &problem.dynamics, &problem.controls, n).unwrap();
                let stride = 8192 / n;
                (0..=n)
                    .map(|k| (&m.states()[k] - &reference.states()[k * stride]).norm())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(
            errors.windows(2).all(|w| w[0] / w[1] >= 1.3),
            "{}: {errors:?}",
            problem.name
        );
    }
}

fn controls_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..3usize, 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn motions_stay_within_growth_radius(which in 0..3usize, alpha in 0.3..0.9f64,
                                         t in 0.0..0.6f64, w0 in -1.0..1.0f64,
                                         c in prop::collection::vec(-1.0..1.0f64, 3),
                                         pieces in controls_strategy()) {
        let problem = problem(which, alpha);
        let p = start(&problem, t, w0, &c);
        let u = PiecewiseControl::equal_pieces(t, 1.0, pieces, &problem.controls).unwrap();
        let m = solve_motion(&p, &u, &problem.dynamics, &problem.controls, 128).unwrap();
        let history_sup = (0..=32).map(|k| p.w_at(t * k as f64 / 32.0).unwrap().norm()).fold(0.0, f64::max);
        let n = history_sup.max(problem.dynamics.growth_constant());
        let radius = growth_radius(n, alpha, 1.0).unwrap();
        prop_assert!(sup_norm(&m) <= 1.01 * radius, "{} > {}", sup_norm(&m), radius);
    }

    #[test]
    fn dirac_lift_reproduces_ordinary_motion(which in 0..3usize, t in 0.0..0.6f64, w0 in -1.0..1.0f64,
                                             c in prop::collection::vec(-1.0..1.0f64, 2),
                                             pieces in controls_strategy()) {
        let problem = problem(which, 0.55);
        let p = start(&problem, t, w0, &c);
        let u = PiecewiseControl::equal_pieces(t, 1.0, pieces, &problem.controls).unwrap();
        let mu = lift_ordinary(&u, &problem.controls).unwrap();
        let a = solve_motion(&p, &u, &problem.dynamics, &problem.controls, 96).unwrap();
        let b = solve_motion_relaxed(&p, &mu, &problem.dynamics, &problem.controls, 96).unwrap();
        for (x, y) in a.states().iter().zip(b.states()) {
            prop_assert!((x - y).norm() <= 1e-12);
        }
    }
}
