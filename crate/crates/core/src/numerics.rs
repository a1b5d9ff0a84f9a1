//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is reproducible for a fixed input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Pairwise sum of `f(i)` for `i in 0..n`, without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64 + Copy>(start: usize, end: usize, f: F) -> f64 {
    const LEAF: usize = 64;
    if end - start <= LEAF {
        return (start..end).map(f).sum();
    }
    let mid = start + (end - start) / 2;
    pairwise_sum_by(start, mid, f) + pairwise_sum_by(mid, end, f)
}

/// Bisection for a sign change of `f` on `[lo, hi]`, stopping when the bracket
/// is below `xtol` relative to its magnitude or stops shrinking.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= xtol * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo) > xtol * (0.5 * (lo + hi)).abs().max(f64::MIN_POSITIVE) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        if x1 >= x2 {
            break;
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
