//! Fast evaluation of the six averaged paths for one feature draw.
//!
//! The stochastic paths cost `O(p)` per step. The `Sigma_hat` paths never
//! leave the row space of `Phi` (up to the fixed offset `-theta*` for the bias
//! path), so they are run in the eigenbasis of `G = Phi Phi^T / n` at `O(n)`
//! per step. The `Sigma_tilde` bias path is deterministic and is evaluated in
//! closed form on the two or three eigenspaces of `Sigma_tilde`.

use nalgebra::{DMatrix, DVector};

use super::PathAverages;
use crate::error::{Error, Result};
use crate::optimizer::StepSchedule;
use crate::spectral::{CovStructure, CovarianceSummary};

/// `(1/n) sum_{t=0}^{n-1} prod_{s=1}^{t} (1 - g_s lambda)`.
fn average_decay(lambda: f64, schedule: &StepSchedule, n: usize) -> f64 {
    let mut prod = 1.0;
    let mut sum = 0.0;
    for t in 1..=n {
        sum += prod;
        prod *= 1.0 - schedule.gamma(t) * lambda;
    }
    sum / n as f64
}

/// Splits `v` into its components on the eigenspaces of `Sigma_tilde`.
fn eigen_components(summary: &CovarianceSummary, v: &DVector<f64>) -> Vec<(f64, DVector<f64>)> {
    let (diag, off, m) = match summary.structure {
        CovStructure::SingleOutput { m } => (summary.a, summary.b, m),
        CovStructure::GaussBlocks { a1, b1, m, .. } => (a1, b1, m),
    };
    let p = v.len();
    let mean = v.rows(0, m).sum() / m as f64;
    let mut top = DVector::zeros(p);
    top.rows_mut(0, m).fill(mean);
    let mut rest = DVector::zeros(p);
    for i in 0..m {
        rest[i] = v[i] - mean;
    }
    let mut out = vec![(diag + (m as f64 - 1.0) * off, top), (diag - off, rest)];
    if let CovStructure::GaussBlocks { a2, .. } = summary.structure {
        let mut sine = DVector::zeros(p);
        sine.rows_mut(m, m).copy_from(&v.rows(m, m));
        out.push((a2, sine));
    }
    out
}

/// Averaged bias path `eta_t = (I - g_t phi phi^T) eta_{t-1}`, `eta_0 = -theta*`.
/// `phi_t` holds one feature vector per column.
pub fn bias_path_average(
    phi_t: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    order: &[usize],
    schedule: &StepSchedule,
) -> Result<DVector<f64>> {
    let mut eta = -theta_star;
    let mut sum = DVector::zeros(eta.len());
    for (k, &i) in order.iter().enumerate() {
        let t = k + 1;
        sum += &eta;
        let f = phi_t.column(i);
        let r = f.dot(&eta);
        if !r.is_finite() {
            return Err(Error::Diverged { step: t, norm: r });
        }
        eta.axpy(-schedule.gamma(t) * r, &f, 1.0);
    }
    Ok(sum / order.len() as f64)
}

/// Quadratic forms for one (order, noise) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTerms {
    pub b1: f64,
    pub bias: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub variance: f64,
}

pub struct CoupledEngine<'a> {
    phi: &'a DMatrix<f64>,
    phi_t: DMatrix<f64>,
    /// Transposed eigenvectors of `G`: column `i` is row `i` of `U`.
    u_t: DMatrix<f64>,
    lambda: DVector<f64>,
    summary: &'a CovarianceSummary,
    theta_star: DVector<f64>,
    schedule: StepSchedule,
    metric: &'a DMatrix<f64>,
    bx: DVector<f64>,
    bxw: DVector<f64>,
}

impl<'a> CoupledEngine<'a> {
    /// `phi` is the `n x p` training design. Quadratic forms use the metric
    /// `M^T M / rows(M)` with `M = metric`; pass `phi` itself for the
    /// training-sample covariance.
    pub fn new(
        phi: &'a DMatrix<f64>,
        summary: &'a CovarianceSummary,
        theta_star: DVector<f64>,
        schedule: StepSchedule,
        metric: &'a DMatrix<f64>,
    ) -> Result<Self> {
        schedule.validate()?;
        let (n, p) = phi.shape();
        if n == 0 {
            return Err(Error::invalid("engine needs at least one sample"));
        }
        for (len, context) in [
            (summary.dim(), "expected covariance"),
            (theta_star.len(), "target parameter"),
            (metric.ncols(), "metric features"),
        ] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: p,
                    actual: len,
                });
            }
        }
        if metric.nrows() == 0 {
            return Err(Error::invalid("metric needs at least one row"));
        }
        let g = phi * phi.transpose() / n as f64;
        let eig = ((&g + g.transpose()) * 0.5).symmetric_eigen();
        let u_t = eig.eigenvectors.transpose();
        let lambda = eig.eigenvalues;
        let phi_t = phi.transpose();

        let mut engine = Self {
            phi,
            phi_t,
            u_t,
            lambda,
            summary,
            theta_star,
            schedule,
            metric,
            bx: DVector::zeros(p),
            bxw: DVector::zeros(p),
        };
        engine.bx = engine.bx_average();
        engine.bxw = engine.bxw_average();
        Ok(engine)
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    /// `<v, M v>` for the configured metric.
    pub fn metric_form(&self, v: &DVector<f64>) -> f64 {
        (self.metric * v).norm_squared() / self.metric.nrows() as f64
    }

    /// `Phi^T U beta`.
    fn lift(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.phi.tr_mul(&self.u_t.tr_mul(beta))
    }

    fn bx_average(&self) -> DVector<f64> {
        let n = self.n();
        let g = -(self.phi * &self.theta_star) / n as f64;
        let h = &self.u_t * g;
        let mut beta = DVector::zeros(n);
        let mut sum = DVector::zeros(n);
        for t in 1..=n {
            sum += &beta;
            let gam = self.schedule.gamma(t);
            for j in 0..n {
                beta[j] = (1.0 - gam * self.lambda[j]) * beta[j] - gam * h[j];
            }
        }
        -&self.theta_star + self.lift(&(sum / n as f64))
    }

    fn bxw_average(&self) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(self.theta_star.len());
        for (lam, comp) in eigen_components(self.summary, &(-&self.theta_star)) {
            out.axpy(average_decay(lam, &self.schedule, n), &comp, 1.0);
        }
        out
    }

    pub fn bx(&self) -> &DVector<f64> {
        &self.bx
    }

    pub fn bxw(&self) -> &DVector<f64> {
        &self.bxw
    }

    pub fn b2(&self) -> f64 {
        self.metric_form(&(&self.bx - &self.bxw))
    }

    pub fn b3(&self) -> f64 {
        self.summary.quad_form(&self.bxw)
    }

    pub fn bias_average(&self, order: &[usize]) -> Result<DVector<f64>> {
        self.check_order(order)?;
        bias_path_average(&self.phi_t, &self.theta_star, order, &self.schedule)
    }

    fn check_order(&self, order: &[usize]) -> Result<()> {
        if order.len() != self.n() || order.iter().any(|&i| i >= self.n()) {
            return Err(Error::invalid(
                "order must be a sequence of n valid sample indices",
            ));
        }
        Ok(())
    }

    /// Averaged `var`, `vX` and `vXW` paths. `noise[i]` is the noise on sample
    /// `i`, which is visited at the step where `order` lists it.
    pub fn variance_averages(
        &self,
        order: &[usize],
        noise: &[f64],
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        self.check_order(order)?;
        let n = self.n();
        if noise.len() != n {
            return Err(Error::DimensionMismatch {
                context: "noise vector",
                expected: n,
                actual: noise.len(),
            });
        }
        let p = self.theta_star.len();
        let (diag, off, m) = match self.summary.structure {
            CovStructure::SingleOutput { m } => (self.summary.a, self.summary.b, m),
            CovStructure::GaussBlocks { a1, b1, m, .. } => (a1, b1, m),
        };
        let a2 = match self.summary.structure {
            CovStructure::GaussBlocks { a2, .. } => a2,
            CovStructure::SingleOutput { .. } => 0.0,
        };

        let mut var = DVector::zeros(p);
        let mut var_sum = DVector::zeros(p);
        let mut vxw = DVector::zeros(p);
        let mut vxw_sum = DVector::zeros(p);
        let mut beta = DVector::zeros(n);
        let mut beta_sum = DVector::zeros(n);
        for (k, &i) in order.iter().enumerate() {
            let t = k + 1;
            let gam = self.schedule.gamma(t);
            let eps = noise[i];
            let f = self.phi_t.column(i);

            var_sum += &var;
            let r = eps - f.dot(&var);
            if !r.is_finite() {
                return Err(Error::Diverged { step: t, norm: r });
            }
            var.axpy(gam * r, &f, 1.0);

            vxw_sum += &vxw;
            let s: f64 = vxw.rows(0, m).sum();
            let c = 1.0 - gam * (diag - off);
            for j in 0..m {
                vxw[j] = c * vxw[j] - gam * off * s;
            }
            for j in m..p {
                vxw[j] *= 1.0 - gam * a2;
            }
            vxw.axpy(gam * eps, &f, 1.0);

            beta_sum += &beta;
            let urow = self.u_t.column(i);
            for j in 0..n {
                beta[j] = (1.0 - gam * self.lambda[j]) * beta[j] + gam * eps * urow[j];
            }
        }
        let k = n as f64;
        let vx = self.lift(&(beta_sum / k));
        for v in [&vx, &vxw_sum] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged {
                    step: n,
                    norm: f64::NAN,
                });
            }
        }
        Ok((var_sum / k, vx, vxw_sum / k))
    }

    /// All six averages for one order and noise draw.
    pub fn path_averages(&self, order: &[usize], noise: &[f64]) -> Result<PathAverages> {
        let bias = self.bias_average(order)?;
        let (var, vx, vxw) = self.variance_averages(order, noise)?;
        Ok(PathAverages {
            bias,
            bx: self.bx.clone(),
            bxw: self.bxw.clone(),
            var,
            vx,
            vxw,
        })
    }

    /// Quadratic forms for one cell given its bias average.
    pub fn cell_terms(
        &self,
        bias: &DVector<f64>,
        order: &[usize],
        noise: &[f64],
    ) -> Result<(CellTerms, PathAverages)> {
        let (var, vx, vxw) = self.variance_averages(order, noise)?;
        let terms = CellTerms {
            b1: self.metric_form(&(bias - &self.bx)),
            bias: self.metric_form(bias),
            v1: self.metric_form(&(&var - &vx)),
            v2: self.metric_form(&(&vx - &vxw)),
            v3: self.metric_form(&vxw),
            variance: self.metric_form(&var),
        };
        let avg = PathAverages {
            bias: bias.clone(),
            bx: self.bx.clone(),
            bxw: self.bxw.clone(),
            var,
            vx,
            vxw,
        };
        Ok((terms, avg))
    }
}
