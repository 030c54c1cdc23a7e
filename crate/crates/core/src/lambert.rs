//! Principal branch of the Lambert W function.

use crate::error::{Error, Result};

const STEP_TOL: f64 = 1e-14;
const MAX_ITERS: usize = 50;
const INV_E: f64 = 0.367_879_441_171_442_33;

/// Solves `w·e^w = x` for `x ≥ −1/e` on the principal branch `w ≥ −1`.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E {
        // Allow the last ulp below −1/e that rounding of `-1/e` produces.
        if x.is_finite() && x >= -INV_E - 1e-16 {
            return Ok(-1.0);
        }
        return Err(Error::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x > 1e300 {
        return Ok(lambert_w_exp(x.ln()));
    }
    let q = x + INV_E;
    if q <= 0.0 {
        return Ok(-1.0);
    }
    let mut w = if x >= 0.0 {
        x.ln_1p()
    } else if q < 0.1 {
        let p = (2.0 * std::f64::consts::E * x + 2.0).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        x.ln_1p()
    };
    for _ in 0..MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if w < -1.0 {
            w = -1.0;
        }
        if step.abs() <= STEP_TOL * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `W(e^l)` without forming `e^l`, i.e. the root of `w + ln w = l`.
///
/// Valid for every real `l`; used where `e^l` would overflow.
pub fn lambert_w_exp(l: f64) -> f64 {
    if l < 1.0 {
        return lambert_w(l.exp()).expect("positive argument");
    }
    if l == f64::INFINITY {
        return f64::INFINITY;
    }
    // Start from the asymptotic expansion and refine with Newton on w + ln w − l.
    let mut w = l - l.ln().max(0.0);
    if w <= 0.0 {
        w = 1.0;
    }
    for _ in 0..MAX_ITERS {
        let f = w + w.ln() - l;
        let step = f / (1.0 + 1.0 / w);
        let next = w - step;
        w = if next > 0.0 { next } else { 0.5 * w };
        if step.abs() <= STEP_TOL * (1.0 + w.abs()) {
            break;
        }
    }
    w
}
