//! The Riemann solver against an independently written bisection on the
//! Lax wave curves, plus admissibility properties of its output.

use front_tracking::riemann::{solve_riemann, to_invariants, GasState, WaveKind};
use front_tracking::roots::Tolerances;
use front_tracking::Error;
use proptest::prelude::*;

fn jump(a: f64, b: f64) -> f64 {
    (b - a).abs() * ((a * a + a * b + b * b) / (3.0 * a * b)).sqrt()
}

/// Velocity on the forward 1-curve from `l` at density `rho`.
fn curve1(l: GasState, rho: f64) -> f64 {
    if rho <= l.rho { l.u + l.rho - rho } else { l.u - jump(l.rho, rho) }
}

/// Velocity on the backward 2-curve into `r` at density `rho`.
fn curve2(r: GasState, rho: f64) -> f64 {
    if rho <= r.rho { r.u - r.rho + rho } else { r.u + jump(rho, r.rho) }
}

/// Middle density by bisection in log ρ; `None` when the curves meet only at
/// vacuum.
fn oracle(l: GasState, r: GasState) -> Option<f64> {
    let f = |rho: f64| curve1(l, rho) - curve2(r, rho);
    let (mut lo, mut hi) = (1e-12f64, 1e12f64);
    if f(lo) <= 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 { lo = mid } else { hi = mid }
    }
    Some(0.5 * (lo + hi))
}

fn state() -> impl Strategy<Value = GasState> {
    (-2.0f64..2.0, 0.05f64..5.0).prop_map(|(u, rho)| GasState::new(u, rho))
}

#[test]
fn known_states() {
    let tol = Tolerances::default();
    // Equal states: no waves.
    let a = GasState::new(0.3, 1.2);
    let sol = solve_riemann(a, a, &tol).unwrap();
    assert_eq!(sol.middle, a);
    assert_eq!(sol.wave1.strength, 0.0);
    // Symmetric collision: two shocks and a state at rest.
    let sol = solve_riemann(GasState::new(1.0, 1.0), GasState::new(-1.0, 1.0), &tol).unwrap();
    assert!(sol.middle.u.abs() < 1e-14);
    assert_eq!(sol.wave1.kind, WaveKind::Shock);
    assert_eq!(sol.wave2.kind, WaveKind::Shock);
    assert!((jump(1.0, sol.middle.rho) - 1.0).abs() < 1e-12);
    // Symmetric expansion: two rarefactions, ρ drops by the velocity gap.
    let sol = solve_riemann(GasState::new(-0.25, 1.0), GasState::new(0.25, 1.0), &tol).unwrap();
    assert!((sol.middle.rho - 0.75).abs() < 1e-14);
    assert_eq!(sol.wave1.kind, WaveKind::Rarefaction);
}

#[test]
fn vacuum_is_reported() {
    let tol = Tolerances::default();
    let err = solve_riemann(GasState::new(-2.0, 0.5), GasState::new(2.0, 0.5), &tol).unwrap_err();
    assert!(matches!(err, Error::Vacuum { .. }));
}

proptest! {
    #[test]
    fn matches_oracle(l in state(), r in state()) {
        let tol = Tolerances::default();
        match (oracle(l, r), solve_riemann(l, r, &tol)) {
            (Some(rho), Ok(sol)) if rho > 1e-6 => {
                prop_assert!((sol.middle.rho - rho).abs() <= 1e-9 * rho.max(1.0));
                prop_assert!((sol.middle.u - curve1(l, rho)).abs() <= 1e-8 * rho.max(1.0));
            }
            (None, res) => prop_assert!(matches!(res, Err(Error::Vacuum { .. })), "expected vacuum"),
            (Some(rho), Err(e)) if rho > 1e-6 => prop_assert!(false, "solver failed: {e}"),
            // Middle states this close to vacuum depend on the density floor.
            _ => {}
        }
    }

    #[test]
    fn waves_are_admissible(l in state(), r in state()) {
        let tol = Tolerances::default();
        let Ok(sol) = solve_riemann(l, r, &tol) else { return Ok(()) };
        let m = sol.middle;
        let (wl, wm, wr) = (to_invariants(l), to_invariants(m), to_invariants(r));
        // A 1-shock compresses (ρ rises) and a 1-rarefaction keeps w₂.
        match sol.wave1.kind {
            WaveKind::Shock => prop_assert!(m.rho > l.rho && m.u < l.u),
            _ => prop_assert!((wm.w2 - wl.w2).abs() <= 1e-12 * (1.0 + wl.w2.abs())),
        }
        match sol.wave2.kind {
            WaveKind::Shock => prop_assert!(m.rho > r.rho && r.u < m.u),
            _ => prop_assert!((wm.w1 - wr.w1).abs() <= 1e-12 * (1.0 + wr.w1.abs())),
        }
        prop_assert!(sol.wave1.speed_exact < sol.wave2.speed_exact);
    }
}
