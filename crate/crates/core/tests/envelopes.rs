use std::f64::consts::PI;

use fracfb::envelope::{
    active_set_from_values, envelope_dderiv_generic, value_bruteforce, CandidateFamily,
    EnvelopeJets,
};
use fracfb::example::value_closed_form_example;
use fracfb::fractional::Position;
use fracfb::problem::{GFunction, Problem};
use fracfb::sensitivity::Jet;
use nalgebra::DVector;
use proptest::prelude::*;

fn example() -> Problem {
    Problem::example(0.5, 1.0, GFunction::One).unwrap()
}

fn v(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

#[test]
fn bruteforce_matches_closed_form_on_lattice() {
    let problem = example();
    for t in [0.0, 0.25, 0.5] {
        for w0 in [-1.0, 0.0, 0.5, 1.0] {
            let p = Position::with_constant_history(problem.config, t, v(w0), v(0.0), 8).unwrap();
            let brute = value_bruteforce(&p, &problem, 4, 1024).unwrap().value;
            let exact = value_closed_form_example(&p, GFunction::One).unwrap();
            assert!(
                (brute - exact).abs() <= 5e-2,
                "t={t} w0={w0}: {brute} vs {exact}"
            );
        }
    }
}

#[test]
fn every_member_lies_above_the_envelope() {
    let problem = Problem::named("oscillator", 0.6, 1.0, None, None).unwrap();
    let p = Position::initial(problem.config, DVector::from_vec(vec![0.3, -0.2])).unwrap();
    let family = CandidateFamily::constant_diracs(&problem.controls)
        .with_bruteforce(&p, &problem, 3, 192)
        .unwrap();
    let jets = EnvelopeJets::compute(&p, &family, &problem, 256).unwrap();
    let values = jets.values();
    let active = jets.active_set(None).unwrap();
    assert!(values.iter().all(|&x| x >= active.min));
    assert!(active
        .indices
        .iter()
        .all(|&i| values[i] <= active.min + active.tol));
    assert!(active.indices.iter().any(|&i| values[i] == active.min));
}

#[test]
fn kink_derivative_is_affine_in_large_directions() {
    let problem = example();
    let p = Position::initial(problem.config, v(0.0)).unwrap();
    let jets = EnvelopeJets::compute(
        &p,
        &CandidateFamily::constant_diracs(&problem.controls),
        &problem,
        1024,
    )
    .unwrap();
    for sign in [1.0, -1.0] {
        let d: Vec<f64> = [10.0, 20.0, 30.0]
            .iter()
            .map(|&f| jets.dderiv(&v(sign * f), None).unwrap())
            .collect();
        assert!((d[1] - 0.5 * (d[0] + d[2])).abs() <= 5e-2, "{d:?}");
        let slope = (d[2] - d[0]) / 20.0;
        assert!((slope + 4.0 / PI.sqrt()).abs() <= 5e-2, "slope {slope}");
    }
}

fn jets() -> impl Strategy<Value = Vec<Jet>> {
    prop::collection::vec((-1.0..1.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..8).prop_map(|raw| {
        raw.into_iter()
            .map(|(value, dt, grad)| Jet {
                value,
                dt,
                grad: DVector::from_element(1, grad),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn larger_tolerance_grows_set_and_lowers_derivative(members in jets(), f in -3.0..3.0f64,
                                                       small in 1e-4..0.5f64, extra in 0.0..1.0f64) {
        let values: Vec<f64> = members.iter().map(|j| j.value).collect();
        let narrow = active_set_from_values(&values, Some(small)).unwrap();
        let wide = active_set_from_values(&values, Some(small + extra)).unwrap();
        prop_assert!(narrow.indices.iter().all(|i| wide.indices.contains(i)));
        let dir = DVector::from_element(1, f);
        let d_narrow = envelope_dderiv_generic(&members, &dir, Some(small)).unwrap();
        let d_wide = envelope_dderiv_generic(&members, &dir, Some(small + extra)).unwrap();
        prop_assert!(d_wide <= d_narrow);
    }
}
