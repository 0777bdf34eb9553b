//! Wave curves and the exact Riemann solver for the p-system with
//! `p = ρ³/3` (equivalently `p(v) = 1/(3v³)`).
//!
//! States live in the (u, ρ) plane. The Riemann invariants are
//! `w₁ = ρ − u` and `w₂ = ρ + u`. The 1-family is the slow family with
//! characteristic speed `−ρ²`; the 2-family moves at `+ρ²`. Rarefaction
//! curves are straight lines of slope ∓1. A wave's strength is the jump of
//! its own family's invariant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{expand_upper, find_root, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasState {
    pub u: f64,
    pub rho: f64,
}

impl GasState {
    pub const fn new(u: f64, rho: f64) -> Self {
        GasState { u, rho }
    }

    /// Specific volume.
    pub fn v(&self) -> f64 {
        1.0 / self.rho
    }

    pub fn invariants(&self) -> RiemannInvariants {
        to_invariants(*self)
    }

    /// The state seen in the mirror `x → −x`, `u → −u`.
    pub fn mirrored(&self) -> GasState {
        GasState::new(-self.u, self.rho)
    }

    pub fn dist(&self, other: &GasState) -> f64 {
        (self.u - other.u).abs().max((self.rho - other.rho).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannInvariants {
    pub w1: f64,
    pub w2: f64,
}

impl RiemannInvariants {
    pub fn get(&self, family: WaveFamily) -> f64 {
        match family {
            WaveFamily::One => self.w1,
            WaveFamily::Two => self.w2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WaveFamily {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl WaveFamily {
    pub fn other(self) -> WaveFamily {
        match self {
            WaveFamily::One => WaveFamily::Two,
            WaveFamily::Two => WaveFamily::One,
        }
    }

    /// −1 for the slow family, +1 for the fast one.
    pub fn sign(self) -> f64 {
        match self {
            WaveFamily::One => -1.0,
            WaveFamily::Two => 1.0,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            WaveFamily::One => 1,
            WaveFamily::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveKind {
    Shock,
    Rarefaction,
    /// A jump along a rarefaction curve with the wrong orientation. Only the
    /// tracking engine produces these.
    Compression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveDescriptor {
    pub family: WaveFamily,
    pub kind: WaveKind,
    pub left: GasState,
    pub right: GasState,
    /// |Δw| of the wave's own family.
    pub strength: f64,
    /// Rankine–Hugoniot speed for shocks, mid-fan characteristic speed for
    /// rarefactions.
    pub speed_exact: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannSolution {
    pub middle: GasState,
    pub wave1: WaveDescriptor,
    pub wave2: WaveDescriptor,
}

impl RiemannSolution {
    pub fn waves(&self) -> [WaveDescriptor; 2] {
        [self.wave1, self.wave2]
    }
}

/// Which side of the shock the anchor state sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    LeftGiven,
    RightGiven,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("density must be positive and finite, got {rho:e}")))
    }
}

pub fn pressure(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(rho * rho * rho / 3.0)
}

pub fn char_speed(rho: f64, family: WaveFamily) -> Result<f64> {
    check_rho(rho)?;
    Ok(family.sign() * rho * rho)
}

pub fn to_invariants(s: GasState) -> RiemannInvariants {
    RiemannInvariants { w1: s.rho - s.u, w2: s.rho + s.u }
}

pub fn from_invariants(w: RiemannInvariants) -> Result<GasState> {
    let two_rho = w.w1 + w.w2;
    if !(two_rho >= 0.0) {
        return Err(Error::domain(format!("invariants give negative density: w1 + w2 = {two_rho:e}")));
    }
    Ok(GasState::new(0.5 * (w.w2 - w.w1), 0.5 * two_rho))
}

/// |u₊ − u₋| across a shock joining densities `a` and `b`, written so that no
/// cancellation occurs for nearby densities:
/// `sqrt((1/a − 1/b)(b³ − a³)/3) = |b − a|·sqrt((a² + ab + b²)/(3ab))`.
pub(crate) fn jump_u(a: f64, b: f64) -> f64 {
    (b - a).abs() * ((a * a + a * b + b * b) / (3.0 * a * b)).sqrt()
}

/// u₊ − u₋ across an admissible shock with densities ρ₋ (left) and ρ₊ (right).
/// The velocity always drops across an admissible shock of either family.
pub fn shock_delta_u(rho_minus: f64, rho_plus: f64) -> Result<f64> {
    check_rho(rho_minus)?;
    check_rho(rho_plus)?;
    Ok(-jump_u(rho_minus, rho_plus))
}

/// Rankine–Hugoniot speed `σ² = (p(v₊) − p(v₋))/(v₋ − v₊)` in Lagrangian
/// coordinates, i.e. `σ² = ab(a² + ab + b²)/3`.
pub fn shock_speed(rho_minus: f64, rho_plus: f64, family: WaveFamily) -> Result<f64> {
    check_rho(rho_minus)?;
    check_rho(rho_plus)?;
    let (a, b) = (rho_minus, rho_plus);
    Ok(family.sign() * (a * b * (a * a + a * b + b * b) / 3.0).sqrt())
}

/// ψ(θ) = (1−θ)(1−θ³)/(3θ); a 1-shock with density ratio θ = ρ₊/ρ₋ has
/// velocity jump s = ρ₋·sqrt(ψ(θ)).
pub fn psi(theta: f64) -> Result<f64> {
    check_rho(theta)?;
    Ok((1.0 - theta) * (1.0 - theta * theta * theta) / (3.0 * theta))
}

pub fn psi_prime(theta: f64) -> Result<f64> {
    check_rho(theta)?;
    let t2 = theta * theta;
    Ok((-1.0 - 2.0 * t2 * theta + 3.0 * t2 * t2) / (3.0 * t2))
}

/// The state across an admissible shock of `family` from `anchor`, with
/// density `rho_other` on the other side.
pub fn shock_curve(anchor: GasState, family: WaveFamily, side: Side, rho_other: f64) -> Result<GasState> {
    check_rho(anchor.rho)?;
    check_rho(rho_other)?;
    let du = jump_u(anchor.rho, rho_other);
    // A 1-shock compresses from left to right, a 2-shock from right to left.
    let other_denser = rho_other >= anchor.rho;
    let ok = match (family, side) {
        (WaveFamily::One, Side::LeftGiven) | (WaveFamily::Two, Side::RightGiven) => other_denser,
        (WaveFamily::One, Side::RightGiven) | (WaveFamily::Two, Side::LeftGiven) => rho_other <= anchor.rho,
    };
    if !ok {
        return Err(Error::InadmissibleOrientation(format!(
            "{family:?}-shock with {side:?} anchor density {:e} cannot reach density {rho_other:e}",
            anchor.rho
        )));
    }
    let u = match side {
        Side::LeftGiven => anchor.u - du,
        Side::RightGiven => anchor.u + du,
    };
    Ok(GasState::new(u, rho_other))
}

/// Moves the own invariant of `family` by `dw`, keeping the other fixed.
pub fn rarefaction_curve(anchor: GasState, family: WaveFamily, dw: f64) -> Result<GasState> {
    check_rho(anchor.rho)?;
    let mut w = to_invariants(anchor);
    match family {
        WaveFamily::One => w.w1 += dw,
        WaveFamily::Two => w.w2 += dw,
    }
    let s = from_invariants(w)?;
    if s.rho <= 0.0 {
        return Err(Error::Vacuum { rho: s.rho, floor: 0.0 });
    }
    Ok(s)
}

/// Right state of the forward 1-wave from `left` with density `rho`: shock for
/// compression, rarefaction (w₂ fixed) for expansion.
pub fn wave1_from_left(left: GasState, rho: f64) -> GasState {
    if rho > left.rho {
        GasState::new(left.u - jump_u(left.rho, rho), rho)
    } else {
        GasState::new(left.rho + left.u - rho, rho)
    }
}

/// Left state of the backward 2-wave into `right` with density `rho`.
pub fn wave2_into_right(right: GasState, rho: f64) -> GasState {
    if rho > right.rho {
        GasState::new(right.u + jump_u(rho, right.rho), rho)
    } else {
        GasState::new(rho - (right.rho - right.u), rho)
    }
}

/// Describes the wave of `family` joining `left` to `right`, assuming the two
/// states lie on one wave curve of that family.
pub fn describe_wave(family: WaveFamily, left: GasState, right: GasState) -> WaveDescriptor {
    let dw = (right.invariants().get(family) - left.invariants().get(family)).abs();
    let shock = match family {
        WaveFamily::One => right.rho > left.rho,
        WaveFamily::Two => right.rho < left.rho,
    };
    if shock {
        WaveDescriptor {
            family,
            kind: WaveKind::Shock,
            left,
            right,
            strength: dw,
            speed_exact: family.sign() * (left.rho * right.rho * (left.rho.powi(2) + left.rho * right.rho + right.rho.powi(2)) / 3.0).sqrt(),
        }
    } else {
        WaveDescriptor {
            family,
            kind: WaveKind::Rarefaction,
            left,
            right,
            strength: dw,
            speed_exact: family.sign() * 0.5 * (left.rho.powi(2) + right.rho.powi(2)),
        }
    }
}

/// The exact Riemann solution: a 1-wave from `left` to the middle state and a
/// 2-wave from the middle state to `right`.
pub fn solve_riemann(left: GasState, right: GasState, tol: &Tolerances) -> Result<RiemannSolution> {
    check_rho(left.rho)?;
    check_rho(right.rho)?;
    let middle = if left == right {
        left
    } else {
        // u along the forward 1-curve decreases with ρ, u along the backward
        // 2-curve increases: their difference has exactly one sign change.
        let f = |rho: f64| wave1_from_left(left, rho).u - wave2_into_right(right, rho).u;
        let lo = tol.rho_floor;
        if f(lo) <= 0.0 {
            return Err(Error::Vacuum { rho: lo, floor: tol.rho_floor });
        }
        let hi = expand_upper(f, lo, left.rho.max(right.rho), 1e300)
            .ok_or_else(|| Error::domain("no upper bracket for the middle density"))?;
        let rho = find_root(f, lo, hi, tol)?;
        if rho <= tol.rho_floor {
            return Err(Error::Vacuum { rho, floor: tol.rho_floor });
        }
        // Take the velocity from the curve on whose branch the root is
        // least sensitive; both agree to rounding.
        let a = wave1_from_left(left, rho);
        let b = wave2_into_right(right, rho);
        GasState::new(0.5 * (a.u + b.u), rho)
    };
    Ok(RiemannSolution {
        middle,
        wave1: describe_wave(WaveFamily::One, left, middle),
        wave2: describe_wave(WaveFamily::Two, middle, right),
    })
}

/// G(ρ_l) = sqrt((1/ρ_l − 1/ρ₁)(ρ₁³ − ρ_l³)/3) − sqrt((1/ρ_l − 1/ρ₂)(ρ₂³ − ρ_l³)/3):
/// the velocity gap between the points of density ρ₁ and ρ₂ on the 1-shock
/// curve issuing from a left state of density ρ_l.
pub fn lemma1_g(rho_l: f64, b1: GasState, a2: GasState) -> Result<f64> {
    check_rho(rho_l)?;
    if !(rho_l < b1.rho.min(a2.rho)) {
        return Err(Error::domain(format!(
            "left density {rho_l:e} must lie below both {:e} and {:e}",
            b1.rho, a2.rho
        )));
    }
    Ok(jump_u(rho_l, b1.rho) - jump_u(rho_l, a2.rho))
}

/// The unique left state U_l such that both `b1` and `a2` lie on the
/// admissible 1-shock curve issuing from U_l.
///
/// Requires u₁ < u₂ and ρ₁ > ρ₂, and that the left state on the 1-shock into
/// `b1` with velocity u₂ has density below ρ₂.
pub fn lemma1_left_state(b1: GasState, a2: GasState, tol: &Tolerances) -> Result<GasState> {
    check_rho(b1.rho)?;
    check_rho(a2.rho)?;
    let (u1, r1, u2, r2) = (b1.u, b1.rho, a2.u, a2.rho);
    if !(u1 < u2) {
        return Err(Error::HypothesisViolation { which: "i: u1 < u2", margin: u2 - u1 });
    }
    if !(r1 > r2) {
        return Err(Error::HypothesisViolation { which: "i: rho1 > rho2", margin: r1 - r2 });
    }
    let gap = u2 - u1;
    // ρ₂*: left state on the 1-shock into b1 whose velocity is u₂.
    let rho2_star = find_root(|r| jump_u(r, r1) - gap, 1e-300, r1, tol)?;
    if !(rho2_star < r2) {
        return Err(Error::HypothesisViolation { which: "ii: rho2* < rho2", margin: r2 - rho2_star });
    }
    // G decreases from +∞ at 0⁺ to jump_u(ρ₂, ρ₁) < gap at ρ₂.
    let rho_l = find_root(|r| jump_u(r, r1) - jump_u(r, r2) - gap, 1e-300, r2, tol)?;
    if rho_l <= tol.rho_floor {
        return Err(Error::Vacuum { rho: rho_l, floor: tol.rho_floor });
    }
    Ok(GasState::new(u1 + jump_u(rho_l, r1), rho_l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn pressure_and_speeds() {
        assert_eq!(pressure(1.0).unwrap(), 1.0 / 3.0);
        assert_eq!(pressure(0.5).unwrap(), 1.0 / 24.0);
        assert_eq!(pressure(3.0).unwrap(), 9.0);
        assert!(pressure(0.0).is_err());
        assert_eq!(char_speed(1.0, WaveFamily::One).unwrap(), -1.0);
        assert_eq!(char_speed(2.0, WaveFamily::Two).unwrap(), 4.0);
        assert!((char_speed(0.1, WaveFamily::One).unwrap() + 0.01).abs() < 1e-17);
    }

    #[test]
    fn invariant_examples() {
        let w = to_invariants(GasState::new(1.0, 2.0));
        assert_eq!((w.w1, w.w2), (1.0, 3.0));
        assert!(from_invariants(RiemannInvariants { w1: -2.0, w2: 1.0 }).is_err());
    }

    #[test]
    fn shock_jump_examples() {
        // Direct form of the Rankine–Hugoniot velocity jump.
        let direct = ((0.5f64 - 1.0) * (1.0 / 3.0 - 8.0 / 3.0)).sqrt();
        assert!((shock_delta_u(1.0, 2.0).unwrap() + direct).abs() < 1e-15);
        assert!((direct - (7.0f64 / 6.0).sqrt()).abs() < 1e-15);
        let h = 1e-7;
        assert!((shock_delta_u(1.0, 1.0 + h).unwrap() / h + 1.0).abs() < 1e-6);
        assert!((shock_speed(1.0, 2.0, WaveFamily::One).unwrap() + (14.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1.0).unwrap(), 0.0);
        assert!((psi(2.0).unwrap() - 7.0 / 6.0).abs() < 1e-15);
        assert!(psi(0.0).is_err());
        // s = ρ₋ sqrt(ψ(θ)) is the velocity jump.
        let (rm, th) = (0.7, 1.9);
        assert!((rm * psi(th).unwrap().sqrt() + shock_delta_u(rm, th * rm).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn small_shock_left_states() {
        let a = GasState::new(0.0, 1.0);
        let s = 0.1;
        let c = shock_curve(a, WaveFamily::One, Side::RightGiven, 1.0 - s).unwrap();
        let series = s * (1.0 + s * s / 6.0 + s * s * s / 6.0);
        assert!((c.u - series).abs() < 2.0 * s.powi(5));
        let r = 0.1;
        let d = shock_curve(a, WaveFamily::Two, Side::RightGiven, 1.0 + r).unwrap();
        let series = r * (1.0 + r * r / 6.0 - r * r * r / 6.0);
        assert!((d.u - series).abs() < 2.0 * r.powi(5));
        assert_eq!(shock_curve(a, WaveFamily::One, Side::LeftGiven, 1.0).unwrap(), a);
        assert!(matches!(
            shock_curve(a, WaveFamily::One, Side::LeftGiven, 0.5),
            Err(Error::InadmissibleOrientation(_))
        ));
    }

    #[test]
    fn rarefaction_examples() {
        let s = rarefaction_curve(GasState::new(0.0, 1.0), WaveFamily::Two, 0.5).unwrap();
        assert_eq!(s, GasState::new(0.25, 1.25));
        assert!(rarefaction_curve(GasState::new(0.0, 1.0), WaveFamily::One, -3.0).is_err());
    }

    #[test]
    fn riemann_trivial_and_symmetric() {
        let l = GasState::new(0.3, 1.7);
        let sol = solve_riemann(l, l, &tol()).unwrap();
        assert_eq!(sol.middle, l);
        assert_eq!(sol.wave1.strength, 0.0);
        assert_eq!(sol.wave2.strength, 0.0);
        let sol = solve_riemann(GasState::new(0.8, 1.0), GasState::new(-0.8, 1.0), &tol()).unwrap();
        assert!(sol.middle.u.abs() < 1e-14);
        assert_eq!(sol.wave1.kind, WaveKind::Shock);
        assert_eq!(sol.wave2.kind, WaveKind::Shock);
        assert!((sol.wave1.strength - sol.wave2.strength).abs() < 1e-13);
    }

    #[test]
    fn riemann_vacuum() {
        let r = solve_riemann(GasState::new(-5.0, 1.0), GasState::new(5.0, 1.0), &tol());
        assert!(matches!(r, Err(Error::Vacuum { .. })));
    }

    #[test]
    fn left_state_closes_velocity_gap() {
        let b1 = GasState::new(-0.5, 2.0);
        let a2 = GasState::new(0.5, 1.2);
        let ul = lemma1_left_state(b1, a2, &tol()).unwrap();
        assert!(ul.rho < a2.rho);
        for target in [b1, a2] {
            let on = shock_curve(ul, WaveFamily::One, Side::LeftGiven, target.rho).unwrap();
            assert!((on.u - target.u).abs() < 1e-10);
        }
        // Independent bracket: plain bisection on G over [ρ₂/1e6, ρ₂).
        let (mut lo, mut hi) = (a2.rho * 1e-6, a2.rho * (1.0 - 1e-12));
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if lemma1_g(m, b1, a2).unwrap() > a2.u - b1.u {
                lo = m
            } else {
                hi = m
            }
        }
        assert!((lo - ul.rho).abs() < 1e-10);
        assert!(lemma1_left_state(b1, b1, &tol()).is_err());
    }

    #[test]
    fn lemma1_g_equal_densities_vanishes() {
        let b1 = GasState::new(-0.5, 2.0);
        let a2 = GasState::new(0.5, 2.0);
        for r in [0.01, 0.5, 1.9] {
            assert_eq!(lemma1_g(r, b1, a2).unwrap(), 0.0);
        }
    }

    #[test]
    fn lemma1_g_sampled_monotone() {
        let b1 = GasState::new(-0.5, 2.0);
        let a2 = GasState::new(0.5, 1.2);
        let mut prev = f64::INFINITY;
        for k in 0..2000 {
            let r = 1.2 * (k as f64 + 0.5) / 2000.0;
            let g = lemma1_g(r, b1, a2).unwrap();
            assert!(g < prev);
            prev = g;
        }
        assert!(lemma1_g(1e-12, b1, a2).unwrap() > 1e5);
    }

    proptest! {
        #[test]
        fn invariants_round_trip(u in -10.0f64..10.0, rho in 1e-6f64..10.0) {
            let s = GasState::new(u, rho);
            let back = from_invariants(to_invariants(s)).unwrap();
            prop_assert!((back.u - u).abs() <= 4.0 * f64::EPSILON * (u.abs() + rho));
            prop_assert!((back.rho - rho).abs() <= 4.0 * f64::EPSILON * (u.abs() + rho));
        }

        #[test]
        fn shocks_satisfy_rh_and_lax(u in -3.0f64..3.0, rho in 0.05f64..5.0, ratio in 1.0001f64..5.0) {
            let l = GasState::new(u, rho);
            let r = shock_curve(l, WaveFamily::One, Side::LeftGiven, rho * ratio).unwrap();
            let sigma = shock_speed(l.rho, r.rho, WaveFamily::One).unwrap();
            // σ(v₊ − v₋) = −(u₊ − u₋) and σ(u₊ − u₋) = p(v₊) − p(v₋).
            let res1 = sigma * (r.v() - l.v()) + (r.u - l.u);
            let res2 = sigma * (r.u - l.u) - (pressure(r.rho).unwrap() - pressure(l.rho).unwrap());
            prop_assert!(res1.abs() < 1e-10 * (1.0 + sigma.abs()));
            prop_assert!(res2.abs() < 1e-10 * (1.0 + pressure(r.rho).unwrap()));
            prop_assert!(-l.rho * l.rho > sigma && sigma > -r.rho * r.rho);
        }

        #[test]
        fn riemann_mirror_symmetry(ul in -3.0f64..3.0, rl in 0.2f64..5.0, ur in -3.0f64..3.0, rr in 0.2f64..5.0) {
            let (l, r) = (GasState::new(ul, rl), GasState::new(ur, rr));
            if let Ok(a) = solve_riemann(l, r, &tol()) {
                let b = solve_riemann(r.mirrored(), l.mirrored(), &tol()).unwrap();
                prop_assert!(a.middle.mirrored().dist(&b.middle) < 1e-11 * (1.0 + a.middle.rho));
                prop_assert_eq!(a.wave1.kind, b.wave2.kind);
            }
        }

        #[test]
        fn continuity_at_zero_strength(rho in 0.1f64..5.0) {
            let h = rho * 1e-9;
            prop_assert!(shock_delta_u(rho, rho + h).unwrap().abs() < 2.0 * h);
            let s = shock_speed(rho, rho + h, WaveFamily::Two).unwrap();
            prop_assert!((s - rho * rho).abs() < 1e-7 * rho * rho);
        }
    }
}
