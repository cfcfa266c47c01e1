use fracfb::dynamics::{solve_motion_relaxed, PiecewiseControl};
use fracfb::envelope::value_bruteforce;
use fracfb::fractional::{CaputoHistory, Position};
use fracfb::problem::{GFunction, Problem};
use fracfb::relaxed::{
    lift_ordinary, solve_auxiliary_y, time_change_inverse, time_change_pi, RelaxedControl,
};
use fracfb::sensitivity::psi;
use nalgebra::DVector;
use proptest::prelude::*;

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, 3).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
        w[2] = 1.0 - w[0] - w[1];
        w
    })
}

fn relaxed(lo: f64, hi: f64) -> impl Strategy<Value = RelaxedControl> {
    (
        prop::collection::vec(0.05..0.95f64, 0..3),
        prop::collection::vec(weights(), 3),
    )
        .prop_map(move |(mut cuts, w)| {
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let until: Vec<f64> = cuts
                .iter()
                .map(|c| lo + c * (hi - lo))
                .chain([hi])
                .collect();
            let pieces = until.len();
            RelaxedControl::new((lo, hi), &until, w[..pieces].to_vec()).unwrap()
        })
}

fn position(problem: &Problem, t: f64, w0: f64, c: f64) -> Position {
    let n = problem.config.dim;
    let history = if t == 0.0 {
        CaputoHistory::empty(n)
    } else {
        CaputoHistory::constant(t, 4, DVector::from_element(n, c)).unwrap()
    };
    Position::new(problem.config, t, DVector::from_element(n, w0), history).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn time_change_round_trip_is_exact(t in 0.0..1.5f64, span in 0.1..2.0f64, mu in relaxed(0.0, 1.0)) {
        // μ lives on [0, 1]; move it to [t, t + span] first
        let horizon = t + span;
        let on_interval = time_change_inverse(&mu, t, horizon).unwrap();
        let back = time_change_pi(&on_interval, t, horizon).unwrap();
        prop_assert_eq!(&back, &mu);
        let again = time_change_inverse(&back, t, horizon).unwrap();
        prop_assert_eq!(again, on_interval);
    }

    #[test]
    fn auxiliary_solution_is_the_rescaled_motion(which in 0..3usize, alpha in 0.3..0.9f64,
                                                t in 0.0..0.7f64, w0 in -1.0..1.0f64, c in -1.0..1.0f64,
                                                nu in relaxed(0.0, 1.0)) {
        let name = ["example-g", "damped", "oscillator"][which];
        let problem = Problem::named(name, alpha, 1.0, Some(GFunction::Poly), None).unwrap();
        let p = position(&problem, t, w0, c);
        let steps = 128;
        let y = solve_auxiliary_y(&p, &nu, &problem.dynamics, &problem.controls, steps).unwrap();
        let mu = time_change_inverse(&nu, t, 1.0).unwrap();
        let x = solve_motion_relaxed(&p, &mu, &problem.dynamics, &problem.controls, steps).unwrap();
        let bound = 2.0 * 0.12 * (steps as f64).powf(-alpha);
        for (a, b) in y.samples().iter().zip(x.states()) {
            prop_assert!((a - b).norm() <= bound);
        }
    }
}

#[test]
fn dirac_lifts_attain_the_enumerated_minimum() {
    let problem = Problem::named("damped", 0.6, 1.0, None, None).unwrap();
    let p = position(&problem, 0.2, 0.8, -0.3);
    let (pieces, steps) = (3, 240);
    let brute = value_bruteforce(&p, &problem, pieces, steps).unwrap();
    let mut best = f64::INFINITY;
    for code in 0..27usize {
        let idx = vec![code % 3, (code / 3) % 3, code / 9];
        let u = PiecewiseControl::equal_pieces(p.t(), 1.0, idx, &problem.controls).unwrap();
        let nu =
            time_change_pi(&lift_ordinary(&u, &problem.controls).unwrap(), p.t(), 1.0).unwrap();
        best = best.min(
            psi(
                &p,
                &nu,
                &problem.dynamics,
                &problem.controls,
                &problem.cost,
                steps,
            )
            .unwrap(),
        );
    }
    assert!(
        (best - brute.value).abs() <= 1e-10,
        "{best} vs {}",
        brute.value
    );
}
