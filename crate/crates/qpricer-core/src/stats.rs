//! Deterministic reductions and summary statistics.
//!
//! All sample reductions in this crate go through pairwise (tree)
//! summation with a fixed split rule, so a sum's value depends only on the
//! slice contents — never on chunking or thread count — and rounding error
//! stays O(log n).

/// Pairwise sum with a fixed recursive split at `len/2`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(x)` over a slice.
pub fn pairwise_sum_by<F: Fn(f64) -> f64 + Copy>(xs: &[f64], f: F) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += f(x);
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error (two-pass, pairwise in both passes).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    if n == 1 {
        return (xs[0], 0.0);
    }
    let m = mean(xs);
    let ss = pairwise_sum_by(xs, |x| (x - m) * (x - m));
    let var = ss / (n as f64 - 1.0);
    (m, libm::sqrt(var / n as f64))
}
