//! Bracketed scalar root finding: bisection down to a coarse width, then a
//! secant polish that never leaves the bracket.

use crate::error::{Error, Result};

const COARSE_WIDTH: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// Finds a root of `f` in `[lo, hi]`, given `f(lo)` and `f(hi)` of opposite
/// sign, to absolute tolerance `tol` in the argument.
pub fn bracketed<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    what: &'static str,
) -> Result<f64> {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { what, lo, hi });
    }

    let mut iter = 0;
    while hi - lo > COARSE_WIDTH && iter < MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        iter += 1;
    }

    // Secant (regula falsi with bisection fallback) inside the bracket.
    while hi - lo > tol && iter < MAX_ITER {
        let mut x = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        // Probe a hair past x to shrink the far side of the bracket too.
        let step = tol.max(f64::EPSILON * x.abs());
        let (probe, f_probe) = if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
            let p = (x + step).min(hi);
            (p, f(p))
        } else {
            hi = x;
            f_hi = fx;
            let p = (x - step).max(lo);
            (p, f(p))
        };
        if f_probe.signum() == f_lo.signum() {
            if probe > lo {
                lo = probe;
                f_lo = f_probe;
            }
        } else if probe < hi {
            hi = probe;
            f_hi = f_probe;
        }
        iter += 1;
    }
    Ok(if f_lo.abs() < f_hi.abs() { lo } else { hi })
}
