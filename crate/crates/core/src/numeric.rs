//! Shared numeric primitives.

/// `log Σ_k exp(values[k] + log_weights[k])` with the max-shift trick.
///
/// Terms are accumulated in ascending index order, so the result is
/// bit-reproducible. Returns `-inf` when every term is `-inf` (for instance
/// when all weights are zero).
pub fn logsumexp(values: &[f64], log_weights: &[f64]) -> f64 {
    assert_eq!(values.len(), log_weights.len(), "logsumexp: length mismatch");
    logsumexp_iter(values.iter().zip(log_weights).map(|(v, w)| v + w))
}

/// `log Σ exp(u_k)` over an iterator of exponents.
///
/// The iterator is consumed twice (once for the max, once for the sum), so
/// it must be `Clone`.
pub fn logsumexp_iter<I>(terms: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for u in terms {
        acc += (u - max).exp();
    }
    max + acc.ln()
}

/// Natural log of a weight, with `ln 0 = -inf` masking zero-weight atoms.
#[inline]
pub fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Sup-norm of the difference of two vectors.
pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Hilbert projective seminorm `½(max Δ − min Δ)` of `a − b`.
pub fn hilbert_diff(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        });
    if lo > hi {
        0.0
    } else {
        0.5 * (hi - lo)
    }
}

/// `x ln(x / y)` with the conventions `0 ln(0/y) = 0` and `x ln(x/0) = +inf`.
#[inline]
pub fn xlogxy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}
