use fracfb::envelope::CandidateFamily;
use fracfb::feedback::{run_feedback, strategy_envelope, strategy_example, Partition, SimReport};
use fracfb::fractional::Position;
use fracfb::problem::{GFunction, Problem};
use fracfb::special::gamma;
use nalgebra::DVector;

fn setup() -> (Problem, Position) {
    let problem = Problem::example(0.5, 1.0, GFunction::Cos).unwrap();
    let p = Position::with_constant_history(
        problem.config,
        0.1,
        DVector::from_element(1, -0.2),
        DVector::from_element(1, 0.5),
        4,
    )
    .unwrap();
    (problem, p)
}

#[test]
fn identical_inputs_give_identical_reports() {
    let (problem, p) = setup();
    let strategy = strategy_envelope(
        CandidateFamily::constant_diracs(&problem.controls),
        &problem,
        None,
        128,
    );
    let partition = Partition::uniform(p.t(), 1.0, 12).unwrap();
    let a = run_feedback(&p, &strategy, &partition, &problem, 16, None).unwrap();
    let b = run_feedback(&p, &strategy, &partition, &problem, 16, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn controls_are_constant_on_partition_pieces() {
    let (problem, p) = setup();
    let strategy = strategy_example(GFunction::Cos, &problem.controls);
    let times = vec![0.1, 0.2, 0.45, 0.5, 0.8, 1.0];
    let partition = Partition::new(times.clone()).unwrap();
    let spp = 10;
    let report = run_feedback(&p, &strategy, &partition, &problem, spp, Some(1)).unwrap();
    assert_eq!(report.controls.len(), times.len() - 1);
    assert_eq!(report.final_control, vec![0.0]);
    assert_eq!(report.caputo.len(), (times.len() - 1) * spp);
    for (cell, c) in report.caputo.iter().enumerate() {
        let piece = cell / spp;
        let u = report.controls[piece][0];
        assert!(problem
            .controls
            .index_of(&DVector::from_element(1, u))
            .is_some());
        let (lo, hi) = (report.times[cell], report.times[cell + 1]);
        assert!(lo >= times[piece] - 1e-12 && hi <= times[piece + 1] + 1e-12);
        // the Caputo derivative of the example is Γ(α) g(τ) u
        let g_hi = GFunction::Cos.value(hi);
        assert!((c[0] - gamma(0.5) * g_hi * u).abs() < 1e-12);
    }
}

#[test]
fn reports_survive_json() {
    let (problem, p) = setup();
    let strategy = strategy_example(GFunction::Cos, &problem.controls);
    let partition = Partition::uniform(p.t(), 1.0, 6).unwrap();
    let report = run_feedback(&p, &strategy, &partition, &problem, 8, None)
        .unwrap()
        .with_reference(-3.0);
    let text = serde_json::to_string(&report).unwrap();
    let back: SimReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
}
