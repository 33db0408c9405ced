//! Small statistical helpers for validation: a one-sample
//! Kolmogorov-Smirnov test and a binomial three-sigma check.

/// One-sample Kolmogorov-Smirnov statistic of `samples` against the
/// continuous CDF `cdf`:
///
/// D_n = sup_x |F_n(x) - F(x)|
///      = max_i max{ i/n - F(x_(i)),  F(x_(i)) - (i-1)/n }.
///
/// Sorts a copy of the samples; NaNs are rejected by panic since they
/// poison the order statistics silently otherwise.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    assert!(!samples.is_empty(), "KS needs at least one sample");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN sample in KS input"));
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic critical value of the KS statistic at significance
/// `alpha`: c(alpha) / sqrt(n) with c(alpha) = sqrt(-ln(alpha/2) / 2).
/// The approximation is standard for n above a few dozen.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    assert!(n > 0 && alpha > 0.0 && alpha < 1.0);
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Outcome of a KS test at a significance level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub critical: f64,
    /// True when the statistic stays below the critical value, i.e. the
    /// sample is consistent with the hypothesized distribution.
    pub accepted: bool,
}

/// Runs the one-sample KS test of `samples` against `cdf` at `alpha`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, alpha: f64) -> KsOutcome {
    let statistic = ks_statistic(samples, cdf);
    let critical = ks_critical(samples.len(), alpha);
    KsOutcome { statistic, critical, accepted: statistic < critical }
}

/// CDF of the exponential distribution with the given rate.
pub fn exponential_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }
}

/// Whether a binomial count `k` out of `n` trials lies within three
/// standard deviations of its mean under success probability `p`.
pub fn binomial_three_sigma_ok(k: u64, n: u64, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (k as f64 - mean).abs() <= 3.0 * sd
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
