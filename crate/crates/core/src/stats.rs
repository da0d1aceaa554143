//! Small statistical helpers shared by the calibration loops and the
//! test suite: moment accumulation, regression, a two-sample KS test,
//! and the standard normal CDF.

/// Running `(count, mean, M2)` accumulator (Welford). Merging two
/// accumulators is associative up to floating-point rounding, which is
/// what lets batches be folded in any fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Running) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance; zero until two samples are seen.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Central moment of order `p`.
pub fn central_moment(xs: &[f64], p: i32) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(p)).sum::<f64>() / xs.len() as f64
}

/// Excess kurtosis `mu4 / sigma^4 - 3`.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let mu4 = central_moment(xs, 4);
    let var = central_moment(xs, 2);
    if var == 0.0 {
        return 0.0;
    }
    mu4 / (var * var) - 3.0
}

/// Variance of the sample-variance estimator, `(mu4 - sigma^4 (n-3)/(n-1)) / n`.
pub fn variance_of_sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 4.0 {
        return f64::INFINITY;
    }
    let mu4 = central_moment(xs, 4);
    let var = variance(xs);
    ((mu4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
/// Returns `(intercept, slope, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points for a line");
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (intercept, slope, r2)
}

/// Standard normal CDF via `erfc`, good to better than 1e-12 everywhere.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let xa = a[i];
        let xb = b[j];
        let t = xa.min(xb);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        let fa = i as f64 / n as f64;
        let fb = j as f64 / m as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Two-sample KS test: `true` means "reject equality at level `alpha`".
/// Uses the asymptotic critical value `c(alpha) * sqrt((n+m)/(n m))` with
/// `c(alpha) = sqrt(-ln(alpha/2)/2)` (1.628 at the 1% level).
pub fn ks_reject(a: &[f64], b: &[f64], alpha: f64) -> bool {
    let d = ks_statistic(a, b);
    let n = a.len() as f64;
    let m = b.len() as f64;
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    d > c * ((n + m) / (n * m)).sqrt()
}

/// Spectral-radius estimate of a dense `d x d` matrix by power iteration.
/// Returns the magnitude of the dominant eigenvalue (0 for the zero matrix).
pub fn spectral_radius(a: &[Vec<f64>]) -> f64 {
    let d = a.len();
    if d == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64) * 0.37).collect();
    let norm = |u: &[f64]| u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut rho = 0.0;
    let n0 = norm(&v);
    if n0 == 0.0 {
        return 0.0;
    }
    for x in v.iter_mut() {
        *x /= n0;
    }
    for _ in 0..200 {
        let mut w = vec![0.0; d];
        for (i, row) in a.iter().enumerate() {
            w[i] = row.iter().zip(&v).map(|(c, x)| c * x).sum();
        }
        let nw = norm(&w);
        if nw < 1e-300 {
            return 0.0;
        }
        rho = nw;
        for x in w.iter_mut() {
            *x /= nw;
        }
        v = w;
    }
    rho
}
