//! Shared statistical machinery for integration tests: Kolmogorov–Smirnov
//! distances, closed-form reference distributions (independent of the
//! library's own special functions), and Monte-Carlo error estimates.

#![allow(dead_code)]

/// One-sample KS statistic of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// KS statistic against the uniform distribution on (0, 1].
pub fn ks_statistic_uniform(samples: &[f64]) -> f64 {
    ks_statistic(samples, |x| x.clamp(0.0, 1.0))
}

/// Asymptotic p-value of a one-sample KS statistic, with the usual
/// finite-sample size correction. Accurate enough for significance tests
/// from a few dozen samples upward.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64 * lambda).powi(2)).exp();
        p += if j % 2 == 1 { 2.0 * term } else { -2.0 * term };
    }
    p.clamp(0.0, 1.0)
}

/// CDF of a Gamma(shape = m, rate = 1) variable at `x`, via the closed
/// form for integer shape: 1 - e^{-x} sum_{j<m} x^j / j!.
pub fn gamma_cdf_int(m: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for j in 1..m {
        term *= x / j as f64;
        sum += term;
    }
    (1.0 - (-x).exp() * sum).clamp(0.0, 1.0)
}

/// CDF of a chi-squared variable with even `k` at `x` (closed form).
pub fn chi2_cdf_even(k: usize, x: f64) -> f64 {
    assert!(k % 2 == 0, "closed form needs an even degree of freedom");
    gamma_cdf_int(k / 2, x / 2.0)
}

/// Log of the Poisson probability mass, built from per-term logarithms
/// with compensated summation — an oracle independent of any library
/// factorial or log-gamma code.
pub fn poisson_lnpmf_oracle(n: u64, nu: f64) -> f64 {
    if nu == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let mut sum = -nu;
    let mut comp = 0.0_f64;
    for k in 1..=n {
        let term = (nu / k as f64).ln();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Poisson CDF P(N <= n | nu) in closed form with a running pmf term.
pub fn poisson_cdf(n: u64, nu: f64) -> f64 {
    let mut term = (-nu).exp();
    let mut sum = term;
    for k in 1..=n {
        term *= nu / k as f64;
        sum += term;
    }
    sum.min(1.0)
}

/// Sample mean and (n-1)-normalized variance.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of the mean of a correlated series, from batch means:
/// robust against chain autocorrelation without estimating it explicitly.
pub fn batch_means_se(xs: &[f64], batch: usize) -> f64 {
    let n_batches = xs.len() / batch;
    assert!(n_batches >= 10, "need at least ten batches");
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64)
        .collect();
    let (_, var) = mean_and_variance(&means);
    (var / n_batches as f64).sqrt()
}

/// Effective independent sample size of a correlated series: the size at
/// which independent sampling would give the same standard error of the
/// mean.
pub fn effective_sample_size(xs: &[f64], batch: usize) -> f64 {
    let se = batch_means_se(xs, batch);
    let (_, var) = mean_and_variance(xs);
    var / (se * se)
}
