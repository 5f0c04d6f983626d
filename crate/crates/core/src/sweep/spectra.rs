//! Spectral diagnostics across the `m` grid of a sweep spec.

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use super::{prepare_data, SweepSpec};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::spectral::{
    averaged_cov_moments, expected_cov, inverse_weighted_trace, psd_gap, trace_concentration,
    MIN_CONCENTRATION_SEEDS,
};

const SPECTRA_STREAM: u64 = 5;

/// Largest feature dimension for which the `p x p` moment diagnostics run.
pub const MAX_MOMENT_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectraRow {
    pub m: usize,
    pub p: usize,
    pub ratio: f64,
    /// Distinct eigenvalues of `Sigma_tilde` as `value x multiplicity`.
    pub eigenvalues: String,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub expected_trace: f64,
    pub sample_trace_mean: f64,
    pub sample_trace_sd: f64,
    pub sample_trace_max_over_mean: f64,
    /// `Tr[Sigma_tilde^{-1} avg_W(Sigma_hat^2)]`; empty above [`MAX_MOMENT_DIM`].
    pub inverse_weighted_trace: Option<f64>,
    /// Smallest eigenvalue of `Tr(Sigma_tilde) Sigma_tilde - avg_W(Sigma_hat^2)`.
    pub psd_gap: Option<f64>,
    pub draws: usize,
}

/// Evaluates the diagnostics on the training inputs of repetition 0.
pub fn spectra_report(spec: &SweepSpec) -> Result<Vec<SpectraRow>> {
    spec.validate()?;
    let data = prepare_data(spec, 0)?;
    let x = &data.train.x;
    let d = x.ncols();
    let n = x.nrows();
    spec.m_grid
        .iter()
        .map(|&m| {
            let summary = expected_cov(spec.activation, x, m)?;
            let seeds: Vec<u64> = (0..MIN_CONCENTRATION_SEEDS)
                .map(|k| derive_seed(spec.seed, &[SPECTRA_STREAM, m as u64, k as u64]))
                .collect();
            let tc = trace_concentration(&seeds, m, d, x, spec.activation)?;
            let p = summary.dim();
            let (iwt, gap) = if p <= MAX_MOMENT_DIM && !summary.degenerate {
                let moments = averaged_cov_moments(&seeds, m, spec.activation, x)?;
                (
                    Some(inverse_weighted_trace(&summary, &moments.mean_cov_sq)?),
                    Some(psd_gap(&summary, &moments.mean_cov_sq, 1.0)?),
                )
            } else {
                (None, None)
            };
            let eigenvalues = summary
                .eigenvalues
                .iter()
                .map(|(v, k)| format!("{v:e} x {k}"))
                .collect::<Vec<_>>()
                .join("; ");
            Ok(SpectraRow {
                m,
                p,
                ratio: m as f64 / n as f64,
                eigenvalues,
                min_eigenvalue: summary.min_eigenvalue(),
                max_eigenvalue: summary.max_eigenvalue(),
                expected_trace: summary.trace,
                sample_trace_mean: tc.mean,
                sample_trace_sd: tc.sd,
                sample_trace_max_over_mean: tc.max_over_mean,
                inverse_weighted_trace: iwt,
                psd_gap: gap,
                draws: seeds.len(),
            })
        })
        .collect()
}

pub fn write_spectra_csv(rows: &[SpectraRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
