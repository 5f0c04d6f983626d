//! Monte Carlo diagnostics over independent draws of `W`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{gram_cov, CovarianceSummary};
use crate::error::{Error, Result};
use crate::features::{ActivationKind, FeatureMap};

pub const MIN_CONCENTRATION_SEEDS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConcentration {
    pub traces: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub max_over_mean: f64,
}

/// Samples `Tr(Sigma_hat)` across independent feature maps.
pub fn trace_concentration(
    map_seeds: &[u64],
    m: usize,
    d: usize,
    x: &DMatrix<f64>,
    activation: ActivationKind,
) -> Result<TraceConcentration> {
    if map_seeds.len() < MIN_CONCENTRATION_SEEDS {
        return Err(Error::invalid(format!(
            "trace concentration needs at least {MIN_CONCENTRATION_SEEDS} seeds (got {})",
            map_seeds.len()
        )));
    }
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "trace concentration data",
            expected: d,
            actual: x.ncols(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("trace concentration needs n >= 1"));
    }
    let traces = map_seeds
        .par_iter()
        .map(|&seed| {
            let map = FeatureMap::new(seed, m, d, activation)?;
            let phi = map.apply_batch(x)?;
            Ok(phi.norm_squared() / x.nrows() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = traces.len() as f64;
    let mean = traces.iter().sum::<f64>() / k;
    let sd = (traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let max = traces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(TraceConcentration {
        traces,
        mean,
        sd,
        max_over_mean: max / mean,
    })
}

#[derive(Debug, Clone)]
pub struct AveragedMoments {
    /// Average of `Sigma_hat` over the draws.
    pub mean_cov: DMatrix<f64>,
    /// Average of `Sigma_hat^2` over the draws.
    pub mean_cov_sq: DMatrix<f64>,
    pub draws: usize,
}

/// Averages `Sigma_hat` and `Sigma_hat^2` over feature maps drawn from `seeds`.
/// Draws run in parallel; the reduction is in seed order.
pub fn averaged_cov_moments(
    seeds: &[u64],
    m: usize,
    activation: ActivationKind,
    x: &DMatrix<f64>,
) -> Result<AveragedMoments> {
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("moment averaging needs n >= 1"));
    }
    let per_draw = seeds
        .par_iter()
        .map(|&seed| {
            let map = FeatureMap::new(seed, m, x.ncols(), activation)?;
            let s = gram_cov(&map.apply_batch(x)?);
            let sq = &s * &s;
            Ok((s, sq))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = m * activation.output_multiplicity();
    let mut mean_cov = DMatrix::zeros(p, p);
    let mut mean_cov_sq = DMatrix::zeros(p, p);
    for (s, sq) in &per_draw {
        mean_cov += s;
        mean_cov_sq += sq;
    }
    let k = seeds.len() as f64;
    Ok(AveragedMoments {
        mean_cov: mean_cov / k,
        mean_cov_sq: mean_cov_sq / k,
        draws: seeds.len(),
    })
}

/// `Tr[Sigma_tilde^{-1} A]`, typically with `A` the across-draw average of
/// `Sigma_hat^2`.
pub fn inverse_weighted_trace(summary: &CovarianceSummary, a: &DMatrix<f64>) -> Result<f64> {
    check_dim(summary, a)?;
    let inv = summary.inverse()?;
    Ok(inv.component_mul(a).sum())
}

/// Smallest eigenvalue of `r Tr(Sigma_tilde) Sigma_tilde - A`. Non-negative
/// values mean the ordering `A <= r Tr(Sigma_tilde) Sigma_tilde` holds.
pub fn psd_gap(summary: &CovarianceSummary, a: &DMatrix<f64>, r: f64) -> Result<f64> {
    check_dim(summary, a)?;
    let diff = summary.assemble() * (r * summary.trace) - a;
    let sym = (&diff + diff.transpose()) * 0.5;
    Ok(sym
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

fn check_dim(summary: &CovarianceSummary, a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != summary.dim() || a.ncols() != summary.dim() {
        return Err(Error::DimensionMismatch {
            context: "diagnostic matrix",
            expected: summary.dim(),
            actual: a.nrows(),
        });
    }
    Ok(())
}
