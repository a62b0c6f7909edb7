use crate::error::{Error, Result};

pub const DEFAULT_ROOT_TOL: f64 = 1e-9;

const BRACKET_LIMIT: f64 = 50.0;
const MAX_ITER: usize = 200;

/// Root of a continuous non-decreasing `f`, starting from the bracket
/// `[lo, hi]`.
///
/// The bracket is widened (never beyond ±50) until `f(lo) ≤ 0 ≤ f(hi)`.
/// Iterates Illinois-modified false position and falls back to bisection when
/// the bracket stops halving. Returns once `|f(a)| ≤ tol` or the bracket is
/// narrower than `tol`.
pub fn monotone_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi && tol > 0.0) {
        return Err(Error::arg(format!(
            "invalid root bracket [{lo}, {hi}] or tolerance {tol}"
        )));
    }
    let (mut lo, mut hi) = (lo.max(-BRACKET_LIMIT), hi.min(BRACKET_LIMIT));
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::Root { f_lo, f_hi });
    }

    let mut width = hi - lo;
    while f_lo > 0.0 {
        if lo <= -BRACKET_LIMIT {
            return Err(Error::Root { f_lo, f_hi });
        }
        hi = lo;
        f_hi = f_lo;
        lo = (lo - width).max(-BRACKET_LIMIT);
        width *= 2.0;
        f_lo = f(lo);
    }
    while f_hi < 0.0 {
        if hi >= BRACKET_LIMIT {
            return Err(Error::Root { f_lo, f_hi });
        }
        lo = hi;
        f_lo = f_hi;
        hi = (hi + width).min(BRACKET_LIMIT);
        width *= 2.0;
        f_hi = f(hi);
    }

    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    if f_hi.abs() <= tol {
        return Ok(hi);
    }

    // fl, fh may be halved by the Illinois rule; they only steer the secant
    let (mut fl, mut fh) = (f_lo, f_hi);
    let mut last_side = 0i8;
    let mut slow_steps = 0;
    for _ in 0..MAX_ITER {
        let width = hi - lo;
        if width <= tol {
            break;
        }
        let mut x = (lo * fh - hi * fl) / (fh - fl);
        if slow_steps >= 2 || !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
            slow_steps = 0;
        }
        let fx = f(x);
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            fl = fx;
            if last_side == -1 {
                fh *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            f_hi = fx;
            fh = fx;
            if last_side == 1 {
                fl *= 0.5;
            }
            last_side = 1;
        }
        if hi - lo > 0.5 * width {
            slow_steps += 1;
        } else {
            slow_steps = 0;
        }
    }
    Ok(if f_lo.abs() <= f_hi.abs() { lo } else { hi })
}
