//! Small statistics helpers for Monte Carlo summaries and trend checks.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(v: f64) -> Self {
        Self {
            mean: v,
            stderr: 0.0,
        }
    }

    /// Mean and standard error of the mean. A single sample has stderr 0.
    pub fn from_samples(xs: &[f64]) -> Self {
        let k = xs.len();
        if k == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return Self::exact(mean);
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
        Self {
            mean,
            stderr: (var / k as f64).sqrt(),
        }
    }
}

/// Sample standard deviation (`n - 1` denominator); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    NonDecreasing,
    NonIncreasing,
}

fn z(diff: f64, a: &Estimate, b: &Estimate) -> f64 {
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    if se > 0.0 {
        diff / se
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Largest standardized violation of the trend over all ordered pairs
/// `i < j`: for a non-increasing trend, `(mean_j - mean_i) / sqrt(se_i^2 + se_j^2)`.
/// Zero or negative means no violation at all.
pub fn isotonic_violation(points: &[Estimate], trend: Trend) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let diff = match trend {
                Trend::NonIncreasing => points[j].mean - points[i].mean,
                Trend::NonDecreasing => points[i].mean - points[j].mean,
            };
            worst = worst.max(z(diff, &points[i], &points[j]));
        }
    }
    if worst == f64::NEG_INFINITY {
        0.0
    } else {
        worst
    }
}

/// Largest standardized pairwise difference; small values mean the points are
/// flat within their errors.
pub fn flatness_score(points: &[Estimate]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let diff = (points[j].mean - points[i].mean).abs();
            worst = worst.max(z(diff, &points[i], &points[j]));
        }
    }
    worst
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}
