//! Small statistical helpers: moments, simple regression and the two-sample
//! Kolmogorov–Smirnov test.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator); zero for fewer than two
/// values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// `y ≈ intercept + slope · x` by ordinary least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub n: usize,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Returns `None` when `x` takes fewer than two distinct values.
pub fn simple_ols(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let (x, y) = (&x[..n], &y[..n]);
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 || !x.iter().any(|&v| v != x[0]) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let sigma2 = if n > 2 { rss / (n - 2) as f64 } else { 0.0 };
    let slope_se = (sigma2 / sxx).sqrt();
    let intercept_se = (sigma2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        n,
    })
}

/// Asymptotic two-sample KS coefficient `c(α) = sqrt(-ln(α/2) / 2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Rejection threshold for `D` at level `alpha` with sample sizes `n`, `m`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Asymptotic survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// `sup |F_a - F_b|`.
    pub statistic: f64,
    pub critical_value: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

impl KsResult {
    /// The fixed decision rule: accept equality iff `D` is below the critical
    /// value.
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_value
    }
}

fn total(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

/// Two-sample KS statistic, exact in the presence of ties.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(total);
    b.sort_unstable_by(total);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if total(&a[i], &b[j]) == Ordering::Greater { b[j] } else { a[i] };
        while i < a.len() && a[i].total_cmp(&x) != Ordering::Greater {
            i += 1;
        }
        while j < b.len() && b[j].total_cmp(&x) != Ordering::Greater {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Two-sample KS test at level `alpha` using the asymptotic critical value.
/// Both samples must be non-empty.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs non-empty samples");
    let statistic = ks_statistic(a, b);
    let (n, m) = (a.len(), b.len());
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    KsResult {
        statistic,
        critical_value: ks_critical_value(alpha, n, m),
        p_value: kolmogorov_sf(en * statistic),
        n,
        m,
    }
}

/// Value below which a fraction `q` of the sorted sample lies (type-7
/// linear interpolation).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
