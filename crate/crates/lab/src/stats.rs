//! Statistical tests for the driving-law comparisons: one- and two-sample
//! Kolmogorov–Smirnov with the asymptotic p-value, and Welch's t-test.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    Normal::new(mu, sigma).expect("valid normal").cdf(x)
}

/// Kolmogorov survival function `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 l^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max(((i + 1) as f64 / n - c).abs());
        d = d.max((c - i as f64 / n).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Two-sample KS with effective size `nm/(n+m)`.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64) * (m as f64) / (n + m) as f64;
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
    }
}

pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance t-test (two-sided).
pub fn welch(xs: &[f64], ys: &[f64]) -> WelchResult {
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (v1, v2) = (variance(xs) / n1, variance(ys) / n2);
    let t = (mean(xs) - mean(ys)) / (v1 + v2).sqrt();
    let dof = (v1 + v2).powi(2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    WelchResult { t, dof, p_value: p }
}
