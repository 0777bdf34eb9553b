//! A small wave crossing a shock, and the gains that follow from it.
//!
//! The basic configuration is a 1-shock P → Q hit from the left by a small
//! 2-wave which shifts the left state along the 2-rarefaction line:
//! P′ = P − (ε, ε). After the crossing the 2-wave sits behind the shock and
//! the right state is Q′ = Q − (η, η). The crossing map is ε ↦ η. Note that ε
//! and η are shifts of u and ρ; the corresponding jump of w₂ is 2ε (resp. 2η),
//! so ratios such as η/ε are the same in either unit.
//!
//! The engine uses the state-level maps [`shock1_to_w1`] and
//! [`shock2_to_w2`], which express the same crossing for arbitrary states.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::riemann::{
    describe_wave, jump_u, psi, psi_prime, shock_curve, to_invariants, GasState, Side, WaveDescriptor, WaveFamily,
};
use crate::roots::{expand_upper, find_root, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingResult {
    pub eta: f64,
    pub shock_after: WaveDescriptor,
    pub amplification: f64,
}

/// The state on the forward 1-shock curve from `left` whose w₁ equals `w1`.
///
/// Along that curve w₁ increases strictly with ρ, so the state exists iff
/// `w1 ≥ w₁(left)`.
pub fn shock1_to_w1(left: GasState, w1: f64, tol: &Tolerances) -> Result<GasState> {
    let w1_left = left.rho - left.u;
    if w1 == w1_left {
        return Ok(left);
    }
    if w1 < w1_left {
        return Err(Error::InadmissibleOrientation(format!(
            "1-shock from w1 = {w1_left:e} cannot lower w1 to {w1:e}"
        )));
    }
    let f = |rho: f64| rho - left.u + jump_u(left.rho, rho) - w1;
    let hi = expand_upper(f, left.rho, left.rho + (w1 - w1_left), 1e300)
        .ok_or_else(|| Error::domain("no bracket for the 1-shock crossing"))?;
    let rho = find_root(f, left.rho, hi, tol)?;
    Ok(GasState::new(left.u - jump_u(left.rho, rho), rho))
}

/// The state on the backward 2-shock curve into `right` whose w₂ equals `w2`
/// (the mirror image of [`shock1_to_w1`]).
pub fn shock2_to_w2(right: GasState, w2: f64, tol: &Tolerances) -> Result<GasState> {
    Ok(shock1_to_w1(right.mirrored(), w2, tol)?.mirrored())
}

/// Density ratio θ and velocity jump s of the 1-shock with strength σ₁ (jump
/// of w₁) and left density ρ₋: σ₁ = (θ − 1)ρ₋ + ρ₋·sqrt(ψ(θ)).
pub fn shock_from_strength(sigma1: f64, rho_minus: f64, tol: &Tolerances) -> Result<(f64, f64)> {
    if !(sigma1 > 0.0) || !(rho_minus > tol.rho_floor) {
        return Err(Error::domain(format!("need σ₁ > 0 and ρ₋ above the floor, got {sigma1:e}, {rho_minus:e}")));
    }
    let p = GasState::new(0.0, rho_minus);
    let q = shock1_to_w1(p, rho_minus + sigma1, tol)?;
    Ok((q.rho / rho_minus, -q.u))
}

fn check_crossing(sigma1: f64, rho_minus: f64, epsilon: f64, tol: &Tolerances) -> Result<()> {
    if !(sigma1 > 0.0) {
        return Err(Error::domain(format!("shock strength must be positive, got {sigma1:e}")));
    }
    if !(rho_minus > tol.rho_floor) {
        return Err(Error::Vacuum { rho: rho_minus, floor: tol.rho_floor });
    }
    if !(epsilon.abs() < rho_minus) {
        return Err(Error::domain(format!("|ε| = {:e} must stay below ρ₋ = {rho_minus:e}", epsilon.abs())));
    }
    Ok(())
}

/// Exact outgoing strength η for a 2-wave of size ε crossing a 1-shock of
/// strength σ₁ with left density ρ₋ (left velocity taken as 0).
pub fn cross_shock_exact(sigma1: f64, rho_minus: f64, epsilon: f64, tol: &Tolerances) -> Result<CrossingResult> {
    check_crossing(sigma1, rho_minus, epsilon, tol)?;
    let p = GasState::new(0.0, rho_minus);
    let q = shock1_to_w1(p, rho_minus + sigma1, tol)?;
    if epsilon == 0.0 {
        return Ok(CrossingResult {
            eta: 0.0,
            shock_after: describe_wave(WaveFamily::One, p, q),
            amplification: eta_prime_exact(sigma1, rho_minus, tol)?,
        });
    }
    let p_new = GasState::new(p.u - epsilon, p.rho - epsilon);
    if p_new.rho <= tol.rho_floor {
        return Err(Error::Vacuum { rho: p_new.rho, floor: tol.rho_floor });
    }
    // The transmitted 2-wave keeps w₁ constant, so Q′ has w₁(Q′) = w₁(Q).
    let q_new = shock1_to_w1(p_new, to_invariants(q).w1, tol)?;
    let eta = q.rho - q_new.rho;
    Ok(CrossingResult { eta, shock_after: describe_wave(WaveFamily::One, p_new, q_new), amplification: eta / epsilon })
}

/// dη/dε at ε = 0 from the linearized relation
/// η′ − 1 = −s/ρ₋ + (ρ₋/(2s))·ψ′(θ)·(θ − η′), solved for η′.
pub fn eta_prime_exact(sigma1: f64, rho_minus: f64, tol: &Tolerances) -> Result<f64> {
    check_crossing(sigma1, rho_minus, 0.0, tol)?;
    let (theta, s) = shock_from_strength(sigma1, rho_minus, tol)?;
    Ok(eta_prime_from_shape(theta, s, rho_minus))
}

fn eta_prime_from_shape(theta: f64, s: f64, rho_minus: f64) -> f64 {
    let a = rho_minus * psi_prime(theta).unwrap_or(f64::NAN) / (2.0 * s);
    (1.0 - s / rho_minus + a * theta) / (1.0 + a)
}

/// η′ for an arbitrary shock given by its side states (either family; a
/// 2-shock is handled through the mirror `u → −u`).
pub fn eta_prime_for_shock(family: WaveFamily, left: GasState, right: GasState, tol: &Tolerances) -> Result<f64> {
    let (l, r) = match family {
        WaveFamily::One => (left, right),
        WaveFamily::Two => (right.mirrored(), left.mirrored()),
    };
    if !(r.rho > l.rho) {
        return Err(Error::InadmissibleOrientation("not a shock".into()));
    }
    let sigma1 = (r.rho - r.u) - (l.rho - l.u);
    eta_prime_exact(sigma1, l.rho, tol)
}

/// Central finite difference of [`cross_shock_exact`] at ε = 0.
pub fn eta_prime_fd(sigma1: f64, rho_minus: f64, tol: &Tolerances) -> Result<f64> {
    let h = (f64::EPSILON.cbrt()).min(0.1 * rho_minus) * rho_minus.min(1.0).max(1e-3);
    let plus = cross_shock_exact(sigma1, rho_minus, h, tol)?.eta;
    let minus = cross_shock_exact(sigma1, rho_minus, -h, tol)?.eta;
    Ok((plus - minus) / (2.0 * h))
}

/// Leading-order η′ for a weak shock as usually quoted: 1 + (s/ρ₋)³/3.
pub fn eta_prime_small_shock(s: f64, rho_minus: f64) -> Result<f64> {
    if !(s >= 0.0) || !(rho_minus > 0.0) {
        return Err(Error::domain("need s ≥ 0 and ρ₋ > 0"));
    }
    Ok(1.0 + (s / rho_minus).powi(3) / 3.0)
}

/// Near-vacuum asymptote 3^{−2/3}(σ₁/ρ₋)^{2/3}.
pub fn eta_prime_near_vacuum(sigma1: f64, rho_minus: f64) -> Result<f64> {
    if !(sigma1 > 0.0) || !(rho_minus > 0.0) {
        return Err(Error::domain("need σ₁ > 0 and ρ₋ > 0"));
    }
    Ok((sigma1 / rho_minus).powf(2.0 / 3.0) / 3f64.powf(2.0 / 3.0))
}

/// The small-shock square: C and D are the left states of a weak 1-shock and a
/// weak 2-shock into A₁ = (0, 1) with equal velocity, B₂ the square vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallSquare {
    pub c: GasState,
    pub d: GasState,
    pub b2: GasState,
    /// ρ_D − 1.
    pub r: f64,
    pub slope: f64,
}

pub fn small_square(s: f64, tol: &Tolerances) -> Result<SmallSquare> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::domain(format!("shock parameter must lie in (0, 1), got {s}")));
    }
    let a1 = GasState::new(0.0, 1.0);
    let c = shock_curve(a1, WaveFamily::One, Side::RightGiven, 1.0 - s)?;
    let r = find_root(|r| jump_u(1.0 + r, 1.0) - c.u, 0.0, 2.0 * s + 1.0, tol)?;
    let d = GasState::new(c.u, 1.0 + r);
    let b2 = GasState::new(c.u + 0.5 * (d.rho - c.rho), 0.5 * (d.rho + c.rho));
    Ok(SmallSquare { c, d, b2, r, slope: (b2.rho - a1.rho) / (b2.u - a1.u) })
}

/// Slope of the segment A₁B₂ (≈ s³/12).
pub fn a1b2_slope(s: f64, tol: &Tolerances) -> Result<f64> {
    Ok(small_square(s, tol)?.slope)
}

/// Relative size of the wave reflected off a large 2-shock whose curve passes
/// through A₁ and B₂: 1 − 2·slope.
pub fn reflection_coefficient(s: f64, tol: &Tolerances) -> Result<f64> {
    Ok(1.0 - 2.0 * a1b2_slope(s, tol)?)
}

/// The four exact factors of one period of a small front in the square
/// pattern: crossings of the weak shocks C→A₁ and D→A₁, two reflections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodFactors {
    pub cross_1shock: f64,
    pub cross_2shock: f64,
    pub reflection: f64,
    pub gain: f64,
}

pub fn period_factors(s: f64, tol: &Tolerances) -> Result<PeriodFactors> {
    let sq = small_square(s, tol)?;
    let a1 = GasState::new(0.0, 1.0);
    let cross_1shock = eta_prime_for_shock(WaveFamily::One, sq.c, a1, tol)?;
    let cross_2shock = eta_prime_for_shock(WaveFamily::Two, sq.d, a1, tol)?;
    let reflection = 1.0 - 2.0 * sq.slope;
    Ok(PeriodFactors {
        cross_1shock,
        cross_2shock,
        reflection,
        gain: cross_1shock * cross_2shock * reflection * reflection,
    })
}

pub fn period_gain(s: f64, tol: &Tolerances) -> Result<f64> {
    Ok(period_factors(s, tol)?.gain)
}

/// ψ evaluated at a shock's density ratio; exported for diagnostics.
pub fn shock_psi(theta: f64) -> Result<f64> {
    psi(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{shock_speed, WaveKind};
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let r = cross_shock_exact(1.0, 0.5, 0.0, &tol()).unwrap();
        assert_eq!(r.eta, 0.0);
        assert!((r.shock_after.strength - 1.0).abs() < 1e-14);
        assert_eq!(r.shock_after.kind, WaveKind::Shock);
    }

    #[test]
    fn strength_is_preserved_by_construction() {
        let r = cross_shock_exact(0.7, 0.3, 0.01, &tol()).unwrap();
        assert!((r.shock_after.strength - 0.7).abs() < 1e-13);
    }

    /// σ₁ of the 1-shock with velocity jump `s` and left density `rho`.
    pub(crate) fn sigma_for_jump(s: f64, rho: f64) -> f64 {
        let theta = find_root(|t| rho * psi(t).unwrap().sqrt() - s, 1.0, 1e6, &tol()).unwrap();
        (theta - 1.0) * rho + s
    }

    // Values computed independently with 50-digit arithmetic.
    #[test]
    fn frozen_eta_prime_values() {
        let ep = eta_prime_exact(sigma_for_jump(0.2, 1.0), 1.0, &tol()).unwrap();
        assert!((ep - 1.0009901123).abs() < 1e-9, "{ep}");
        let ep = eta_prime_exact(1.0, 1e-3, &tol()).unwrap();
        assert!((ep - 40.1769).abs() < 1e-3, "{ep}");
    }

    #[test]
    fn closed_form_matches_finite_difference() {
        for sigma in [0.1, 0.5, 1.0, 2.0] {
            for rho in [1e-3, 1e-2, 0.1, 1.0] {
                let a = eta_prime_exact(sigma, rho, &tol()).unwrap();
                let b = eta_prime_fd(sigma, rho, &tol()).unwrap();
                assert!(((a - b) / a).abs() < 1e-6, "σ={sigma} ρ={rho}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn near_vacuum_formula() {
        let v = eta_prime_near_vacuum(1.0, 1e-4).unwrap();
        assert!((v - 223.1).abs() < 0.05);
        let mut prev = 0.0;
        for rho in [1e-2, 1e-3, 1e-4] {
            let ratio = eta_prime_exact(1.0, rho, &tol()).unwrap() / eta_prime_near_vacuum(1.0, rho).unwrap();
            assert!(ratio > prev && ratio < 1.0);
            prev = ratio;
        }
    }

    #[test]
    fn small_shock_formula_examples() {
        assert_eq!(eta_prime_small_shock(0.0, 1.0).unwrap(), 1.0);
        assert!((eta_prime_small_shock(0.2, 1.0).unwrap() - 1.002667).abs() < 1e-6);
    }

    #[test]
    fn square_geometry() {
        let sq = small_square(0.1, &tol()).unwrap();
        // r = s + s⁴/3 + o(s⁴)
        assert!(((sq.r - 0.1) / 1e-4 - 1.0 / 3.0).abs() < 0.1);
        assert!((sq.slope / (1e-3 / 12.0) - 1.0).abs() < 0.2);
        // Square sides are rarefaction lines of slope ±1 through C and D.
        assert!(((sq.b2.rho - sq.c.rho) - (sq.b2.u - sq.c.u)).abs() < 1e-15);
        assert!(((sq.d.rho - sq.b2.rho) + (sq.d.u - sq.b2.u)).abs() < 1e-15);
    }

    #[test]
    fn period_gain_exceeds_one() {
        for k in 1..=50 {
            let s = 0.01 * k as f64;
            assert!(period_gain(s, &tol()).unwrap() > 1.0, "s = {s}");
        }
    }

    #[test]
    fn eta_prime_monotone_towards_vacuum() {
        let mut prev = 0.0;
        for k in 0..40 {
            let rho = 10f64.powf(-(k as f64) / 10.0);
            let e = eta_prime_exact(1.0, rho, &tol()).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn state_maps_are_mirror_images() {
        let r = GasState::new(0.3, 1.1);
        let m = shock2_to_w2(r, r.rho + r.u + 0.4, &tol()).unwrap();
        assert!(m.rho > r.rho);
        assert!((m.rho + m.u - (r.rho + r.u + 0.4)).abs() < 1e-14);
        assert!(shock_speed(m.rho, r.rho, WaveFamily::Two).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn crossing_is_invertible(sigma in 0.05f64..2.0, rho in 0.01f64..2.0, frac in -0.3f64..0.3) {
            // Cross with ε, then cross the transmitted configuration back with
            // the shock's new left state: the original left state returns.
            let eps = frac * rho;
            let fwd = cross_shock_exact(sigma, rho, eps, &tol()).unwrap();
            let p2 = fwd.shock_after.left;
            let q2 = fwd.shock_after.right;
            // Undo: shift the right state back by +η along the 2-line and
            // recover the left state on the 1-shock ending there.
            let q = GasState::new(q2.u + fwd.eta, q2.rho + fwd.eta);
            let back = shock1_to_w1(GasState::new(p2.u + eps, p2.rho + eps), q.rho - q.u, &tol()).unwrap();
            prop_assert!(back.dist(&q) < 1e-10 * (1.0 + q.rho + q.u.abs()));
        }
    }
}
