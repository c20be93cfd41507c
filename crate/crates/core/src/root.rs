//! Bracketing root finders.

use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `tol` or cannot be split any
/// further in floating point.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Domain(format!(
            "bisection needs a sign change on [{lo}, {hi}]"
        )));
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
}

/// Smallest `x` in `[lo, hi]` where a monotone predicate turns true, resolved
/// to the last representable bit. `pred(lo)` must be false and `pred(hi)` true.
pub fn bisect_predicate<P>(pred: P, mut lo: f64, mut hi: f64) -> f64
where
    P: Fn(f64) -> bool,
{
    debug_assert!(!pred(lo) && pred(hi));
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}
