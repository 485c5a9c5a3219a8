//! Monte Carlo estimators with batch-means standard errors, and least squares.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// A point estimate with its standard error (NaN when too few samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// `k`-statistic estimate of the third cumulant.
pub fn third_cumulant(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 * n * n / ((n - 1.0) * (n - 2.0))
}

/// Default batch count: 50, fewer for short runs (at least 2 per batch).
pub fn default_batches(len: usize) -> usize {
    (len / 2).clamp(1, 50)
}

/// `stat` over the whole sample, with a standard error from the spread of
/// `stat` over `batches` contiguous batches.
pub fn batch_estimate(xs: &[f64], batches: usize, stat: impl Fn(&[f64]) -> f64) -> Estimate {
    let value = stat(xs);
    let b = batches.min(xs.len() / 2);
    if b < 2 {
        return Estimate { value, se: f64::NAN };
    }
    let size = xs.len() / b;
    let per: Vec<f64> = (0..b).map(|i| stat(&xs[i * size..(i + 1) * size])).collect();
    Estimate { value, se: (variance(&per) / b as f64).sqrt() }
}

pub fn mean_estimate(xs: &[f64]) -> Estimate {
    batch_estimate(xs, default_batches(xs.len()), mean)
}

pub fn variance_estimate(xs: &[f64]) -> Estimate {
    batch_estimate(xs, default_batches(xs.len()), variance)
}

pub fn covariance_estimate(xs: &[f64], ys: &[f64]) -> Estimate {
    let value = covariance(xs, ys);
    let b = default_batches(xs.len()).min(xs.len() / 2);
    if b < 2 {
        return Estimate { value, se: f64::NAN };
    }
    let size = xs.len() / b;
    let per: Vec<f64> =
        (0..b).map(|i| covariance(&xs[i * size..(i + 1) * size], &ys[i * size..(i + 1) * size])).collect();
    Estimate { value, se: (variance(&per) / b as f64).sqrt() }
}

/// Empirical characteristic function `E exp(i xi x)` with separate standard
/// errors for the real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharEstimate {
    pub value: Complex<f64>,
    pub se_re: f64,
    pub se_im: f64,
}

pub fn characteristic_function(xs: &[f64], xi: f64) -> CharEstimate {
    let re: Vec<f64> = xs.iter().map(|x| (xi * x).cos()).collect();
    let im: Vec<f64> = xs.iter().map(|x| (xi * x).sin()).collect();
    let (r, i) = (mean_estimate(&re), mean_estimate(&im));
    CharEstimate { value: Complex::new(r.value, i.value), se_re: r.se, se_im: i.se }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let slope_se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LinearFit { slope, intercept, r_squared, slope_se }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
