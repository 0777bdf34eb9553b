//! End-to-end runs of the scenario builders through the engine.

use front_tracking::riemann::{GasState, WaveFamily};
use front_tracking::scenarios::*;
use front_tracking::tracking::{
    discretize_profile, run, Mode, Piece, SimConfig, SpeedPolicy, Termination,
};
use front_tracking::Error;

#[test]
fn pattern_is_periodic() {
    let st = example3_states(1.0, 1.3).unwrap();
    let r = periodic_run(&st, 3, &PatternLayout::default(), &Overrides::default()).unwrap();
    assert_eq!(r.report.residuals.len(), 3);
    assert!(r.report.max_residual < 1e-9, "{}", r.report.max_residual);
    r.state.check_invariants().unwrap();
}

#[test]
fn amplifier_gain_exceeds_one() {
    let p = AmplifierParams { periods: 4, ..AmplifierParams::default() };
    let st = p.states().unwrap();
    let r = amplifier_run(&st, p.eps0, p.periods, &p.layout, &Overrides::default()).unwrap();
    assert_eq!(r.report.gains.len(), 4);
    assert!(r.report.gains.iter().all(|&g| g > 1.0));
    assert!((r.report.lambda - 1.000_287_67).abs() < 1e-7, "{}", r.report.lambda);
}

#[test]
fn example1_crossings_are_logged() {
    let r = example1_run(&Example1Params::default(), &Overrides::default()).unwrap();
    assert!(!r.report.crossings.is_empty());
    assert!(r.report.bound_checked > 0);
    assert_eq!(r.termination, Termination::NoEvents);
    r.state.check_invariants().unwrap();
}

#[test]
fn finite_time_rejects_short_horizon() {
    let p = FiniteTimeParams { horizon_factor: 1e-3, ..FiniteTimeParams::default() };
    assert!(matches!(StageSchedule::new(&p), Err(Error::ScheduleInfeasible(_))));
}

#[test]
fn exponent_conditions_never_hold_together() {
    let g = exponent_grid(20);
    assert_eq!(g.points, 19 * 19);
    assert_eq!(g.all_true, 0);
}

/// Both interaction modes reach the horizon with bounded TV and chained
/// states on data without a near-vacuum.
#[test]
fn modes_run_smooth_data_to_horizon() {
    let w = |x: f64| 1.0 + 0.2 * (3.0 * x).sin();
    let left = GasState::new(0.0, 1.0);
    for mode in [Mode::PaperBookkeeping, Mode::RiemannExact] {
        let config = SimConfig { delta_r: 0.02, mode, t_max: 2.0, ..SimConfig::default() };
        let pieces = [
            Piece::Smooth { family: WaveFamily::Two, breaks: vec![0.0, 0.5, 1.5, 2.0], w: &w },
            Piece::Shock { x: 2.5, family: WaveFamily::One, strength: 0.1 },
        ];
        let s0 = discretize_profile(left, &pieces, config, SpeedPolicy::Exact).unwrap();
        let tv0 = front_tracking::tracking::total_variation(&s0);
        let (s, _, _, term) = run(s0.clone()).unwrap();
        assert_eq!(term, Termination::TMax);
        let tv = front_tracking::tracking::total_variation(&s);
        assert!(tv.0 + tv.1 < 3.0 * (tv0.0 + tv0.1));
        s.check_invariants().unwrap();
        assert_ne!(s.fronts, s0.fronts);
    }
}
