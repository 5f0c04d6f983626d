//! Monte Carlo estimation of the bias/variance split over feature draws,
//! label-noise draws and data orders.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::engine::{CellTerms, CoupledEngine};
use super::stats::Estimate;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::optimizer::{min_norm_fit, sgd_with_order, StepSchedule, DEFAULT_SVD_TOL};
use crate::rng::{derive_seed, normal_vec, rng_from_seed};
use crate::spectral::expected_cov;

const ORDER_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const TARGET_STREAM: u64 = 3;

/// Covariance used in every quadratic form except `B3`.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskMetric {
    /// `Sigma_hat` of the training sample.
    TrainSample,
    /// Feature covariance on these held-out inputs, recomputed per draw of `W`.
    HeldOut(DMatrix<f64>),
}

/// Where `theta*` comes from for each feature draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetModel {
    /// Gaussian direction in feature space scaled to this norm.
    Planted { target_norm: f64 },
    /// Minimum-norm fit to the dataset's clean targets.
    CleanTargets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McCounts {
    pub n_w: usize,
    pub n_noise: usize,
    pub n_order: usize,
}

impl McCounts {
    pub fn new(n_w: usize, n_noise: usize, n_order: usize) -> Result<Self> {
        let c = Self {
            n_w,
            n_noise,
            n_order,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.n_w == 0 || self.n_noise == 0 || self.n_order == 0 {
            return Err(Error::invalid(format!(
                "Monte Carlo counts must be >= 1 (got {} x {} x {})",
                self.n_w, self.n_noise, self.n_order
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionConfig {
    pub schedule: StepSchedule,
    pub mc: McCounts,
    pub metric: RiskMetric,
    pub target: TargetModel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub b1: Estimate,
    pub b2: Estimate,
    pub b3: Estimate,
    pub v1: Estimate,
    pub v2: Estimate,
    pub v3: Estimate,
    pub bias: Estimate,
    pub variance: Estimate,
    pub excess: Estimate,
    /// `excess - (bias + variance)`, paired per cell.
    pub additivity_gap: Estimate,
    /// `sqrt(se_excess^2 + se_bias^2 + se_variance^2)`.
    pub combined_stderr: f64,
    pub counts: McCounts,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub stability_warning: bool,
}

const N_FIELDS: usize = 10;

/// Per-cell values in report order: B1 B2 B3 V1 V2 V3 bias variance excess gap.
type Cell = [f64; N_FIELDS];

fn cell_values(t: &CellTerms, b2: f64, b3: f64, excess: f64) -> Cell {
    [
        t.b1,
        b2,
        b3,
        t.v1,
        t.v2,
        t.v3,
        t.bias,
        t.variance,
        excess,
        excess - t.bias - t.variance,
    ]
}

fn mean_cell(cells: &[Cell]) -> Cell {
    let mut out = [0.0; N_FIELDS];
    for c in cells {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    out.map(|v| v / cells.len() as f64)
}

fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    order
}

struct WDraw {
    /// One entry per (order, antithetic pair), each averaged over its pair.
    cells: Vec<Cell>,
    stability_warning: bool,
    m: usize,
    p: usize,
}

fn run_w_draw<F>(
    dataset: &Dataset,
    factory: &F,
    config: &DecompositionConfig,
    w: usize,
) -> Result<WDraw>
where
    F: Fn(usize) -> Result<FeatureMap>,
{
    let map = factory(w)?;
    if map.d() != dataset.d() {
        return Err(Error::DimensionMismatch {
            context: "feature map input dimension",
            expected: dataset.d(),
            actual: map.d(),
        });
    }
    let n = dataset.n();
    let seed_w = derive_seed(config.seed, &[w as u64]);
    let phi = map.apply_batch(&dataset.x)?;
    let summary = expected_cov(map.activation(), &dataset.x, map.m())?;
    let theta_star = match config.target {
        TargetModel::Planted { target_norm } => {
            if !(target_norm >= 0.0) || !target_norm.is_finite() {
                return Err(Error::invalid(format!(
                    "target norm must be >= 0 (got {target_norm})"
                )));
            }
            let mut rng = rng_from_seed(derive_seed(seed_w, &[TARGET_STREAM]));
            let mut theta = DVector::from_vec(normal_vec(&mut rng, phi.ncols(), 1.0));
            let norm = theta.norm();
            theta *= target_norm / norm;
            theta
        }
        TargetModel::CleanTargets => {
            let fstar = dataset
                .fstar
                .as_ref()
                .ok_or_else(|| Error::invalid("dataset has no clean targets"))?;
            min_norm_fit(&phi, fstar, DEFAULT_SVD_TOL)?
        }
    };
    let held_out;
    let metric = match &config.metric {
        RiskMetric::TrainSample => &phi,
        RiskMetric::HeldOut(x) => {
            held_out = map.apply_batch(x)?;
            &held_out
        }
    };
    let clean: Vec<f64> = (&phi * &theta_star).iter().copied().collect();
    let engine = CoupledEngine::new(&phi, &summary, theta_star.clone(), config.schedule, metric)?;
    let (b2, b3) = (engine.b2(), engine.b3());
    let pairs = config.mc.n_noise.div_ceil(2);
    let stability_warning = config.schedule.gamma0 * phi.norm_squared() / n as f64 > 1.0 + 1e-12;

    let cells: Vec<Vec<Cell>> = (0..config.mc.n_order)
        .into_par_iter()
        .map(|k| -> Result<Vec<Cell>> {
            let order = if k == 0 {
                (0..n).collect()
            } else {
                permutation(derive_seed(seed_w, &[ORDER_STREAM, k as u64]), n)
            };
            let bias = engine.bias_average(&order)?;
            (0..pairs)
                .into_par_iter()
                .map(|j| {
                    let mut rng =
                        rng_from_seed(derive_seed(seed_w, &[NOISE_STREAM, k as u64, j as u64]));
                    let base = normal_vec(&mut rng, n, dataset.noise_sd);
                    let signs: &[f64] = if 2 * j + 1 < config.mc.n_noise {
                        &[1.0, -1.0]
                    } else {
                        &[1.0]
                    };
                    let mut pair = Vec::with_capacity(2);
                    for &s in signs {
                        let noise: Vec<f64> = base.iter().map(|e| s * e).collect();
                        let (terms, _) = engine.cell_terms(&bias, &order, &noise)?;
                        let y: Vec<f64> = clean.iter().zip(&noise).map(|(f, e)| f + e).collect();
                        let run = sgd_with_order(
                            &phi,
                            &y,
                            &order,
                            &config.schedule,
                            DVector::zeros(phi.ncols()),
                            false,
                        )?;
                        let excess = engine.metric_form(&(run.theta_bar - &theta_star));
                        pair.push(cell_values(&terms, b2, b3, excess));
                    }
                    Ok(mean_cell(&pair))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(WDraw {
        cells: cells.into_iter().flatten().collect(),
        stability_warning,
        m: map.m(),
        p: map.feature_dim(),
    })
}

/// Estimates B1..B3, V1..V3, Bias, Variance and the excess risk of the actual
/// SGD run (started at zero). `map_factory(w)` builds the `w`-th feature map.
///
/// Noise draws come in antithetic pairs `(eps, -eps)`. Standard errors are
/// taken across per-draw means of `W` when `n_w >= 2`, otherwise across
/// (order, pair) cells.
pub fn estimate_terms<F>(
    dataset: &Dataset,
    map_factory: F,
    config: &DecompositionConfig,
) -> Result<DecompositionReport>
where
    F: Fn(usize) -> Result<FeatureMap> + Sync,
{
    config.mc.validate()?;
    config.schedule.validate()?;
    let draws: Vec<WDraw> = (0..config.mc.n_w)
        .into_par_iter()
        .map(|w| run_w_draw(dataset, &map_factory, config, w))
        .collect::<Result<_>>()?;

    let samples: Vec<Cell> = if draws.len() >= 2 {
        draws.iter().map(|d| mean_cell(&d.cells)).collect()
    } else {
        draws[0].cells.clone()
    };
    let est: Vec<Estimate> = (0..N_FIELDS)
        .map(|i| Estimate::from_samples(&samples.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect();
    let combined_stderr =
        (est[8].stderr.powi(2) + est[6].stderr.powi(2) + est[7].stderr.powi(2)).sqrt();
    Ok(DecompositionReport {
        b1: est[0],
        b2: est[1],
        b3: est[2],
        v1: est[3],
        v2: est[4],
        v3: est[5],
        bias: est[6],
        variance: est[7],
        excess: est[8],
        additivity_gap: est[9],
        combined_stderr,
        counts: config.mc,
        n: dataset.n(),
        m: draws[0].m,
        p: draws[0].p,
        stability_warning: draws.iter().any(|d| d.stability_warning),
    })
}
