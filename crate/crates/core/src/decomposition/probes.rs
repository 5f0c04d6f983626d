//! Rate and shape probes: the bias as a function of `n` at fixed `m/n`, and
//! the variance terms as a function of `m/n` at fixed `n`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::engine::bias_path_average;
use super::estimate::{estimate_terms, DecompositionConfig, DecompositionReport};
use super::stats::{ols_slope, Estimate};
use crate::data::{gen_inputs, CovSpec, Dataset};
use crate::error::{Error, Result};
use crate::features::{ActivationKind, FeatureMap};
use crate::optimizer::StepSchedule;
use crate::rng::{derive_seed, normal_vec, rng_from_seed, standard_normal, Rng};

/// How the planted `theta*` is drawn for each feature draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateTarget {
    /// Uniformly random direction in feature space.
    Isotropic,
    /// Coefficient `g_i / sqrt(i)` on the `i`-th eigenvector of `Sigma_hat`
    /// (eigenvalues in decreasing order), `g_i` standard normal. The Hilbert
    /// norm stays bounded while the mass spreads over the whole spectrum, so
    /// the averaged-SGD bias decays at the worst-case rate.
    SpectralEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateProbeConfig {
    /// `m / n`, held fixed across the grid.
    pub ratio: f64,
    pub n_grid: Vec<usize>,
    pub d: usize,
    pub activation: ActivationKind,
    pub cov: CovSpec,
    pub schedule: StepSchedule,
    pub target: RateTarget,
    pub target_norm: f64,
    pub n_w: usize,
    pub n_order: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateProbe {
    pub n: Vec<usize>,
    pub bias: Vec<Estimate>,
    /// Grid points whose estimate was not positive and so left out of the fit.
    pub dropped: Vec<usize>,
    pub slope: f64,
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    let lo = n_grid.iter().copied().min().unwrap_or(0);
    let hi = n_grid.iter().copied().max().unwrap_or(0);
    if n_grid.len() < 4 || lo == 0 || hi < 8 * lo {
        return Err(Error::invalid(format!(
            "rate probe needs >= 4 positive grid points spanning >= 8x (got {n_grid:?})"
        )));
    }
    Ok(())
}

fn spectral_edge_target(phi: &DMatrix<f64>, rng: &mut Rng) -> DVector<f64> {
    let n = phi.nrows();
    let g = phi * phi.transpose() / n as f64;
    let eig = ((&g + g.transpose()) * 0.5).symmetric_eigen();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let floor = 1e-12 * eig.eigenvalues.amax();
    let mut theta = DVector::zeros(phi.ncols());
    for (rank, &i) in ranked.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        if lambda <= floor {
            break;
        }
        // Unit right singular vector of Phi for this eigenvalue.
        let v = phi.tr_mul(&eig.eigenvectors.column(i)) / (n as f64 * lambda).sqrt();
        theta.axpy(standard_normal(rng) / ((rank + 1) as f64).sqrt(), &v, 1.0);
    }
    theta
}

fn bias_at(config: &RateProbeConfig, n: usize) -> Result<Estimate> {
    let m = ((config.ratio * n as f64).round() as usize).max(1);
    let base = derive_seed(config.seed, &[n as u64]);
    let x = gen_inputs(derive_seed(base, &[0]), n, config.d, &config.cov)?;
    let per_w: Vec<Vec<f64>> = (0..config.n_w)
        .into_par_iter()
        .map(|w| -> Result<Vec<f64>> {
            let seed_w = derive_seed(base, &[1, w as u64]);
            let map = FeatureMap::new(seed_w, m, config.d, config.activation)?;
            let phi = map.apply_batch(&x)?;
            let mut rng = rng_from_seed(derive_seed(seed_w, &[1]));
            let mut theta = match config.target {
                RateTarget::Isotropic => DVector::from_vec(normal_vec(&mut rng, phi.ncols(), 1.0)),
                RateTarget::SpectralEdge => spectral_edge_target(&phi, &mut rng),
            };
            let norm = theta.norm();
            theta *= config.target_norm / norm;
            let phi_t = phi.transpose();
            (0..config.n_order)
                .into_par_iter()
                .map(|k| {
                    let mut order: Vec<usize> = (0..n).collect();
                    if k > 0 {
                        order.shuffle(&mut rng_from_seed(derive_seed(seed_w, &[2, k as u64])));
                    }
                    let avg = bias_path_average(&phi_t, &theta, &order, &config.schedule)?;
                    Ok((&phi * avg).norm_squared() / n as f64)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(if per_w.len() >= 2 {
        let means: Vec<f64> = per_w
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        Estimate::from_samples(&means)
    } else {
        Estimate::from_samples(&per_w[0])
    })
}

/// Fits the log-log slope of the training-sample bias against `n`.
pub fn rate_probe_bias(config: &RateProbeConfig) -> Result<RateProbe> {
    check_grid(&config.n_grid)?;
    config.schedule.validate()?;
    if !(config.ratio > 0.0) || config.n_w == 0 || config.n_order == 0 {
        return Err(Error::invalid(
            "rate probe needs ratio > 0 and Monte Carlo counts >= 1",
        ));
    }
    let bias: Vec<Estimate> = config
        .n_grid
        .iter()
        .map(|&n| bias_at(config, n))
        .collect::<Result<_>>()?;
    let mut dropped = Vec::new();
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (&n, e) in config.n_grid.iter().zip(&bias) {
        if e.mean > 0.0 && e.mean.is_finite() {
            lx.push((n as f64).ln());
            ly.push(e.mean.ln());
        } else {
            dropped.push(n);
        }
    }
    let slope = ols_slope(&lx, &ly).ok_or_else(|| {
        Error::invalid(format!(
            "too few positive bias estimates (dropped {dropped:?})"
        ))
    })?;
    Ok(RateProbe {
        n: config.n_grid.clone(),
        bias,
        dropped,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeProbeConfig {
    /// Values of `m / n`; must include points on both sides of the
    /// interpolation threshold.
    pub ratios: Vec<f64>,
    pub activation: ActivationKind,
    pub decomposition: DecompositionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapePoint {
    pub ratio: f64,
    pub m: usize,
    pub report: DecompositionReport,
}

/// Runs the full decomposition at every ratio on a fixed dataset.
pub fn shape_probe_variance(
    dataset: &Dataset,
    config: &ShapeProbeConfig,
) -> Result<Vec<ShapePoint>> {
    let n = dataset.n();
    let threshold = 1.0 / config.activation.output_multiplicity() as f64;
    let below = config.ratios.iter().any(|&r| r < threshold);
    let above = config.ratios.iter().any(|&r| r > threshold);
    if !below || !above {
        return Err(Error::invalid(format!(
            "ratio grid must straddle the interpolation threshold m/n = {threshold}"
        )));
    }
    let d = dataset.d();
    let activation = config.activation;
    config
        .ratios
        .iter()
        .map(|&ratio| {
            let m = ((ratio * n as f64).round() as usize).max(1);
            let base = derive_seed(config.decomposition.seed, &[m as u64]);
            let mut dc = config.decomposition.clone();
            dc.seed = base;
            let report = estimate_terms(
                dataset,
                |w| FeatureMap::new(derive_seed(base, &[u64::MAX, w as u64]), m, d, activation),
                &dc,
            )?;
            Ok(ShapePoint { ratio, m, report })
        })
        .collect()
}
