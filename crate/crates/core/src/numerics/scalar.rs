use crate::error::{Error, Result};

/// Minimizes a convex function on `[lo, hi]` by bisection on the sign of a
/// subgradient. `subgradient(x)` must be nondecreasing in `x`.
///
/// The returned point lies in a bracket of width at most `tol` that contains
/// the smallest minimizer; when the subgradient is already nonnegative at
/// `lo`, `lo` itself is returned.
pub fn scalar_convex_min<F>(mut subgradient: F, lo: f64, hi: f64, tol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(lo <= hi);
    if subgradient(lo) >= 0.0 {
        return lo;
    }
    if subgradient(hi) < 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if subgradient(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// Finds `x` with `f(x) = target` for a nondecreasing `f`, expanding the
/// bracket geometrically from `guess`. Stops once the bracket is narrower
/// than `tol * (1 + |x|)`.
pub fn bisect_increasing<F>(mut f: F, target: f64, guess: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut step = 1.0f64.max(guess.abs());
    let (mut lo, mut hi);
    let g0 = f(guess);
    if g0 == target {
        return Ok(guess);
    }
    if g0 < target {
        lo = guess;
        hi = guess + step;
        let mut tries = 0;
        while f(hi) < target {
            lo = hi;
            step *= 2.0;
            hi += step;
            tries += 1;
            if tries > 200 || !hi.is_finite() {
                return Err(Error::Bracket);
            }
        }
    } else {
        hi = guess;
        lo = guess - step;
        let mut tries = 0;
        while f(lo) > target {
            hi = lo;
            step *= 2.0;
            lo -= step;
            tries += 1;
            if tries > 200 || !lo.is_finite() {
                return Err(Error::Bracket);
            }
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * (1.0 + mid.abs()) || mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
