//! Sample covariance `Sigma_hat = Phi^T Phi / n` and the analytic expected
//! covariance `Sigma_tilde = E_W[Sigma_hat]` with its exact eigenstructure.
//!
//! For single-output activations the expectation over `W` has the form
//! `(a - b) I + b 11^T`: `a = E_x E_z[sigma(z)^2] / m` and
//! `b = E_x (E_z[sigma(z)])^2 / m` with `z ~ N(0, |x|^2 / d)`. For the cos/sin
//! map it splits into a cosine block of the same form and a diagonal sine
//! block. Expectations over `x` are always sample averages over the supplied
//! rows.

mod diagnostics;
pub mod quadrature;

pub use diagnostics::{
    averaged_cov_moments, inverse_weighted_trace, psd_gap, trace_concentration, AveragedMoments,
    TraceConcentration, MIN_CONCENTRATION_SEEDS,
};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{ActivationKind, FeatureMap};

pub const DEFAULT_QUAD_ORDER: usize = 64;
pub const CLUSTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovStructure {
    SingleOutput {
        m: usize,
    },
    /// Cosine block `(a1 - b1) I + b1 11^T` followed by the sine block `a2 I`.
    GaussBlocks {
        a1: f64,
        b1: f64,
        a2: f64,
        m: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    /// Common diagonal entry (of the cosine block for `GaussBlocks`).
    pub a: f64,
    /// Common off-diagonal entry (of the cosine block for `GaussBlocks`).
    pub b: f64,
    pub structure: CovStructure,
    /// Distinct eigenvalues with multiplicities, in the order given by the
    /// closed forms. Entries with multiplicity zero are dropped.
    pub eigenvalues: Vec<(f64, usize)>,
    pub trace: f64,
    /// Set when some eigenvalue is not strictly positive.
    pub degenerate: bool,
}

impl CovarianceSummary {
    pub fn single_output(a: f64, b: f64, m: usize) -> Self {
        let eigenvalues = vec![(a + (m as f64 - 1.0) * b, 1), (a - b, m - 1)];
        Self::finish(
            a,
            b,
            CovStructure::SingleOutput { m },
            eigenvalues,
            m as f64 * a,
        )
    }

    pub fn gauss_blocks(a1: f64, b1: f64, a2: f64, m: usize) -> Self {
        let eigenvalues = vec![(a1 + (m as f64 - 1.0) * b1, 1), (a2, m), (a1 - b1, m - 1)];
        Self::finish(
            a1,
            b1,
            CovStructure::GaussBlocks { a1, b1, a2, m },
            eigenvalues,
            m as f64 * (a1 + a2),
        )
    }

    fn finish(
        a: f64,
        b: f64,
        structure: CovStructure,
        eigenvalues: Vec<(f64, usize)>,
        trace: f64,
    ) -> Self {
        let eigenvalues: Vec<(f64, usize)> =
            eigenvalues.into_iter().filter(|&(_, k)| k > 0).collect();
        let degenerate = eigenvalues.iter().any(|&(v, _)| v <= 0.0);
        Self {
            a,
            b,
            structure,
            eigenvalues,
            trace,
            degenerate,
        }
    }

    pub fn m(&self) -> usize {
        match self.structure {
            CovStructure::SingleOutput { m } | CovStructure::GaussBlocks { m, .. } => m,
        }
    }

    /// Matrix dimension `p`.
    pub fn dim(&self) -> usize {
        match self.structure {
            CovStructure::SingleOutput { m } => m,
            CovStructure::GaussBlocks { m, .. } => 2 * m,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&(v, _)| v)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&(v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// All `p` eigenvalues, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .eigenvalues
            .iter()
            .flat_map(|&(v, k)| std::iter::repeat_n(v, k))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// `out = Sigma_tilde * v` in `O(p)` using the block structure.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let (diag, off, m) = match self.structure {
            CovStructure::SingleOutput { m } => (self.a, self.b, m),
            CovStructure::GaussBlocks { a1, b1, m, .. } => (a1, b1, m),
        };
        let s: f64 = v[..m].iter().sum();
        for i in 0..m {
            out[i] = (diag - off) * v[i] + off * s;
        }
        if let CovStructure::GaussBlocks { a2, m, .. } = self.structure {
            for i in m..2 * m {
                out[i] = a2 * v[i];
            }
        }
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(v.as_slice(), out.as_mut_slice());
        out
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.matvec(v))
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut out = DMatrix::zeros(p, p);
        let (diag, off, m) = match self.structure {
            CovStructure::SingleOutput { m } => (self.a, self.b, m),
            CovStructure::GaussBlocks { a1, b1, m, .. } => (a1, b1, m),
        };
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = if i == j { diag } else { off };
            }
        }
        if let CovStructure::GaussBlocks { a2, m, .. } = self.structure {
            for i in m..2 * m {
                out[(i, i)] = a2;
            }
        }
        out
    }

    /// Dense inverse from the closed form: `((a-b) I + b 11^T)^{-1}
    /// = (I - b / (a + (m-1) b) 11^T) / (a - b)`.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if self.degenerate {
            return Err(Error::invalid("expected covariance is singular"));
        }
        let p = self.dim();
        let mut out = DMatrix::zeros(p, p);
        let (diag, off, m) = match self.structure {
            CovStructure::SingleOutput { m } => (self.a, self.b, m),
            CovStructure::GaussBlocks { a1, b1, m, .. } => (a1, b1, m),
        };
        let lam2 = diag - off;
        let lam1 = diag + (m as f64 - 1.0) * off;
        let c = off / lam1;
        for i in 0..m {
            for j in 0..m {
                let delta = if i == j { 1.0 } else { 0.0 };
                out[(i, j)] = (delta - c) / lam2;
            }
        }
        if let CovStructure::GaussBlocks { a2, m, .. } = self.structure {
            for i in m..2 * m {
                out[(i, i)] = 1.0 / a2;
            }
        }
        Ok(out)
    }
}

fn check_rows(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::invalid(
            "data sample must have at least one row and column",
        ));
    }
    Ok(())
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    Ok(())
}

/// Per-row `|x|^2 / d`.
pub fn row_scales(x: &DMatrix<f64>) -> Vec<f64> {
    let d = x.ncols() as f64;
    x.row_iter().map(|r| r.norm_squared() / d).collect()
}

/// Sample mean of `|x|^2 / d`, the plug-in estimate of `Tr(Sigma_d) / d`.
pub fn trace_ratio(x: &DMatrix<f64>) -> Result<f64> {
    check_rows(x)?;
    let s = row_scales(x);
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

pub fn sample_cov(map: &FeatureMap, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() == 0 {
        return Err(Error::invalid("sample covariance needs n >= 1"));
    }
    let phi = map.apply_batch(x)?;
    Ok(gram_cov(&phi))
}

/// `Phi^T Phi / n` for a precomputed feature matrix, symmetrized exactly.
pub fn gram_cov(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = phi.nrows() as f64;
    let mut s = phi.tr_mul(phi) / n;
    let p = s.nrows();
    for i in 0..p {
        for j in i + 1..p {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

pub fn expected_cov_relu(trace_ratio: f64, m: usize) -> Result<CovarianceSummary> {
    check_m(m)?;
    if !(trace_ratio > 0.0) || !trace_ratio.is_finite() {
        return Err(Error::invalid(format!(
            "trace ratio must be > 0 (got {trace_ratio})"
        )));
    }
    let mf = m as f64;
    let a = trace_ratio / (2.0 * mf);
    let b = trace_ratio / (2.0 * mf * PI);
    Ok(CovarianceSummary::single_output(a, b, m))
}

/// Linear activation: `E_z[z] = 0` and `E_z[z^2] = |x|^2 / d`, so
/// `Sigma_tilde = (trace_ratio / m) I`.
pub fn expected_cov_identity(trace_ratio: f64, m: usize) -> Result<CovarianceSummary> {
    check_m(m)?;
    if !(trace_ratio >= 0.0) || !trace_ratio.is_finite() {
        return Err(Error::invalid(format!(
            "trace ratio must be >= 0 (got {trace_ratio})"
        )));
    }
    Ok(CovarianceSummary::single_output(
        trace_ratio / m as f64,
        0.0,
        m,
    ))
}

/// Cos/sin blocks with `t = |x|^2 / d`: cosine diagonal `E[1 + e^{-2t}] / (2m)`,
/// cosine off-diagonal `E[e^{-t}] / m`, sine diagonal `E[1 - e^{-2t}] / (2m)`.
pub fn expected_cov_gauss(x: &DMatrix<f64>, m: usize) -> Result<CovarianceSummary> {
    check_rows(x)?;
    check_m(m)?;
    let scales = row_scales(x);
    let n = scales.len() as f64;
    let mf = m as f64;
    let mean = |f: &dyn Fn(f64) -> f64| scales.iter().map(|&t| f(t)).sum::<f64>() / n;
    let a1 = mean(&|t| 1.0 + (-2.0 * t).exp()) / (2.0 * mf);
    let b1 = mean(&|t| (-t).exp()) / mf;
    let a2 = mean(&|t| -(-2.0 * t).exp_m1()) / (2.0 * mf);
    Ok(CovarianceSummary::gauss_blocks(a1, b1, a2, m))
}

/// Analytic `Sigma_tilde` for the activation, with `E_x` taken over `x`'s rows.
pub fn expected_cov(
    activation: ActivationKind,
    x: &DMatrix<f64>,
    m: usize,
) -> Result<CovarianceSummary> {
    match activation {
        ActivationKind::Relu => expected_cov_relu(trace_ratio(x)?, m),
        ActivationKind::Identity => expected_cov_identity(trace_ratio(x)?, m),
        ActivationKind::CosSin => expected_cov_gauss(x, m),
    }
}

/// Quadrature route for any scalar activation: the inner Gaussian expectations
/// are computed per row with a `quad_order`-point half-range rule on each side
/// of zero.
pub fn expected_cov_quadrature_fn(
    sigma: impl Fn(f64) -> f64,
    x: &DMatrix<f64>,
    m: usize,
    quad_order: usize,
) -> Result<CovarianceSummary> {
    check_rows(x)?;
    check_m(m)?;
    let rule = quadrature::half_gauss(quad_order)?;
    let (mut sq, mut mean_sq) = (0.0, 0.0);
    let scales = row_scales(x);
    for &t in &scales {
        let s = t.sqrt();
        let e1 = quadrature::split_expectation(&rule, |z| sigma(s * z));
        let e2 = quadrature::split_expectation(&rule, |z| sigma(s * z).powi(2));
        sq += e2;
        mean_sq += e1 * e1;
    }
    let denom = scales.len() as f64 * m as f64;
    Ok(CovarianceSummary::single_output(
        sq / denom,
        mean_sq / denom,
        m,
    ))
}

pub fn expected_cov_quadrature(
    activation: ActivationKind,
    x: &DMatrix<f64>,
    m: usize,
    quad_order: usize,
) -> Result<CovarianceSummary> {
    match activation {
        ActivationKind::Relu => expected_cov_quadrature_fn(|z| z.max(0.0), x, m, quad_order),
        ActivationKind::Identity => expected_cov_quadrature_fn(|z| z, x, m, quad_order),
        ActivationKind::CosSin => {
            check_rows(x)?;
            check_m(m)?;
            let rule = quadrature::half_gauss(quad_order)?;
            let (mut cc, mut c2, mut ss) = (0.0, 0.0, 0.0);
            let scales = row_scales(x);
            for &t in &scales {
                let s = t.sqrt();
                let ec = quadrature::split_expectation(&rule, |z| (s * z).cos());
                cc += quadrature::split_expectation(&rule, |z| (s * z).cos().powi(2));
                ss += quadrature::split_expectation(&rule, |z| (s * z).sin().powi(2));
                c2 += ec * ec;
            }
            // E[sin] = 0 and E[cos sin] = 0 by symmetry, so the sine block is
            // diagonal and decoupled from the cosine block.
            let denom = scales.len() as f64 * m as f64;
            Ok(CovarianceSummary::gauss_blocks(
                cc / denom,
                c2 / denom,
                ss / denom,
                m,
            ))
        }
    }
}

pub fn assemble_expected_cov(summary: &CovarianceSummary, m: usize) -> Result<DMatrix<f64>> {
    if summary.m() != m {
        return Err(Error::DimensionMismatch {
            context: "expected covariance feature count",
            expected: summary.m(),
            actual: m,
        });
    }
    Ok(summary.assemble())
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sorted_spectrum(s: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = s.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Groups ascending-sorted values: a value joins the current cluster when it
/// is within `tol` of the previous value. Returns `(cluster mean, size)`.
pub fn cluster_eigenvalues(values: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut sum = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for v in sorted {
        if out.is_empty() || v - prev > tol {
            if let Some(last) = out.last_mut() {
                last.0 = sum / last.1 as f64;
            }
            out.push((v, 0));
            sum = 0.0;
        }
        let last = out.last_mut().expect("cluster pushed above");
        last.1 += 1;
        sum += v;
        prev = v;
    }
    if let Some(last) = out.last_mut() {
        last.0 = sum / last.1 as f64;
    }
    out
}
