//! Bracketed scalar root finding.
//!
//! Every function we solve is strictly monotone on its bracket, so a
//! safeguarded false-position iteration (Illinois variant) with periodic
//! bisection always converges. The iteration runs until the bracket cannot
//! shrink further in floating point.

use crate::error::{Error, Result};

/// Numeric tolerances shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Largest acceptable |f| at a returned root, relative to `max(1, scale)`
    /// where `scale` is the magnitude of the terms entering `f`.
    pub residual: f64,
    pub max_iter: usize,
    /// Densities at or below this value count as vacuum.
    pub rho_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-12, max_iter: 200, rho_floor: 1e-9 }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    // Geometric bisection for positive brackets spanning orders of magnitude:
    // densities near vacuum would otherwise need hundreds of halvings.
    if lo > 0.0 && hi > 4.0 * lo {
        (lo * hi).sqrt()
    } else {
        lo + 0.5 * (hi - lo)
    }
}

/// Finds `x` in `[a, b]` with `f(x) = 0`. `f(a)` and `f(b)` must not have the
/// same strict sign.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: &Tolerances) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::domain("root bracket evaluates to NaN"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::domain(format!("root not bracketed: f({a:e})={fa:e}, f({b:e})={fb:e}")));
    }
    // Illinois weights, kept apart from the true values.
    let (mut wa, mut wb) = (fa, fb);
    let mut last_side = 0i8;
    for it in 0..tol.max_iter {
        let m = midpoint(a, b);
        if m <= a.min(b) || m >= a.max(b) {
            return Ok(if fa.abs() <= fb.abs() { a } else { b });
        }
        let mut c = (a * wb - b * wa) / (wb - wa);
        if it % 3 == 2 || !(c > a.min(b) && c < a.max(b)) {
            c = m;
        }
        let fc = f(c);
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.is_nan() {
            return Err(Error::domain(format!("function is NaN at {c:e}")));
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            wb = fc;
            if last_side == -1 {
                wa *= 0.5;
            }
            last_side = -1;
        } else {
            a = c;
            fa = fc;
            wa = fc;
            if last_side == 1 {
                wb *= 0.5;
            }
            last_side = 1;
        }
    }
    let residual = fa.abs().min(fb.abs());
    Err(Error::NonConvergence { iterations: tol.max_iter, residual })
}

/// Expands `hi` geometrically until `f(hi)` has the sign opposite to `f(lo)`.
pub fn expand_upper<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi0: f64, limit: f64) -> Option<f64> {
    let s = f(lo).signum();
    let mut hi = hi0.max(lo * 2.0).max(f64::MIN_POSITIVE);
    while hi <= limit {
        let v = f(hi);
        if v == 0.0 || v.signum() != s {
            return Some(hi);
        }
        hi *= 2.0;
    }
    None
}
