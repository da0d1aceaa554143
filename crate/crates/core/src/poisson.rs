//! Exact-law Poisson sampling.
//!
//! Two regimes: sequential CDF inversion for small rates and Hörmann's
//! transformed rejection (PTRS) for large ones. Both are exact samplers;
//! a normal approximation would corrupt the coupling-variance law that
//! the level-difference estimators rely on.

use crate::rng::PathRng;

/// Rate threshold between inversion-by-search and transformed rejection.
pub const INVERSION_CUTOFF: f64 = 10.0;

/// Draw one `Poisson(lambda)` variate. `lambda = 0` returns 0 (the call
/// is still counted, since the cost model charges per call).
pub fn sample(lambda: f64, rng: &mut PathRng) -> u64 {
    debug_assert!(lambda >= 0.0 && lambda.is_finite());
    rng.poisson_calls += 1;
    if lambda <= 0.0 {
        0
    } else if lambda < INVERSION_CUTOFF {
        inversion(lambda, rng)
    } else {
        ptrs(lambda, rng)
    }
}

/// Sequential search of the CDF; expected work grows like `lambda`.
fn inversion(lambda: f64, rng: &mut PathRng) -> u64 {
    let u = rng.uniform();
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p < 1e-300 {
            break;
        }
    }
    k
}

/// `ln(k!)` with a precomputed table for small `k`; the rejection path
/// below hits it often just above the regime cutoff.
fn ln_factorial(k: f64) -> f64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![0.0f64; 1024];
        for k in 2..t.len() {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    });
    let idx = k as usize;
    if idx < table.len() {
        table[idx]
    } else {
        libm::lgamma(k + 1.0)
    }
}

/// PTRS transformed rejection (Hörmann 1993), valid for `lambda >= 10`.
fn ptrs(lambda: f64, rng: &mut PathRng) -> u64 {
    let log_lambda = lambda.ln();
    let b = 0.931 + 2.53 * lambda.sqrt();
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        let rhs = k * log_lambda - lambda - ln_factorial(k);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
