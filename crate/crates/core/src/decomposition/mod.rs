//! The six coupled error recursions and the Monte Carlo bias/variance split.
//!
//! With `theta_0 = 0` and labels `y_t = <phi_t, theta*> + eps_t`, the centered
//! SGD iterate splits exactly as `theta_t - theta* = eta_bias_t + eta_var_t`:
//!
//! ```text
//! eta_bias_t = (I - g_t phi_t phi_t^T) eta_bias_{t-1},              eta_bias_0 = -theta*
//! eta_var_t  = (I - g_t phi_t phi_t^T) eta_var_{t-1} + g_t eps_t phi_t, eta_var_0 = 0
//! ```
//!
//! The `X` paths replace `phi_t phi_t^T` by the sample covariance
//! `Sigma_hat`, and the `XW` paths replace it by `Sigma_tilde = E_W[Sigma_hat]`.
//! Every path is time-averaged over `t = 0..n-1`. The bias paths start at
//! `-theta*` so that the identity above holds with the plus sign; all reported
//! quantities are quadratic forms and do not depend on that sign.

mod engine;
mod estimate;
mod probes;
pub mod stats;

pub use engine::{bias_path_average, CellTerms, CoupledEngine};
pub use estimate::{
    estimate_terms, DecompositionConfig, DecompositionReport, McCounts, RiskMetric, TargetModel,
};
pub use probes::{
    rate_probe_bias, shape_probe_variance, RateProbe, RateProbeConfig, RateTarget, ShapePoint,
    ShapeProbeConfig,
};
pub use stats::{flatness_score, isotonic_violation, ols_slope, Estimate, Trend};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::optimizer::StepSchedule;

/// Time-averaged paths `(1/n) sum_{t=0}^{n-1} eta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAverages {
    pub bias: DVector<f64>,
    pub bx: DVector<f64>,
    pub bxw: DVector<f64>,
    pub var: DVector<f64>,
    pub vx: DVector<f64>,
    pub vxw: DVector<f64>,
}

/// Per-step states `eta_0 .. eta_n` of the two stochastic paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub bias: Vec<DVector<f64>>,
    pub var: Vec<DVector<f64>>,
}

/// Dense reference implementation over inputs in visiting order.
pub fn run_paths(
    map: &FeatureMap,
    sigma_hat: &DMatrix<f64>,
    sigma_tilde: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    x_ordered: &DMatrix<f64>,
    noise: &[f64],
    schedule: &StepSchedule,
) -> Result<PathAverages> {
    let phi = map.apply_batch(x_ordered)?;
    run_paths_features(
        &phi,
        sigma_hat,
        sigma_tilde,
        theta_star,
        noise,
        schedule,
        false,
    )
    .map(|r| r.0)
}

fn check_square_symmetric(s: &DMatrix<f64>, p: usize, context: &'static str) -> Result<()> {
    if s.nrows() != p || s.ncols() != p {
        return Err(Error::DimensionMismatch {
            context,
            expected: p,
            actual: s.nrows(),
        });
    }
    let asym = (s - s.transpose()).amax();
    if asym > 1e-10 * s.amax().max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// Dense reference on precomputed features (row `t-1` is visited at step `t`),
/// optionally recording the stochastic path states.
pub fn run_paths_features(
    phi: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    sigma_tilde: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    noise: &[f64],
    schedule: &StepSchedule,
    record: bool,
) -> Result<(PathAverages, Option<PathTrace>)> {
    schedule.validate()?;
    let (n, p) = phi.shape();
    if n == 0 {
        return Err(Error::invalid("paths need at least one sample"));
    }
    check_square_symmetric(sigma_hat, p, "sample covariance")?;
    check_square_symmetric(sigma_tilde, p, "expected covariance")?;
    if theta_star.len() != p {
        return Err(Error::DimensionMismatch {
            context: "target parameter",
            expected: p,
            actual: theta_star.len(),
        });
    }
    if noise.len() != n {
        return Err(Error::DimensionMismatch {
            context: "noise vector",
            expected: n,
            actual: noise.len(),
        });
    }

    let mut bias = -theta_star;
    let mut bx = -theta_star;
    let mut bxw = -theta_star;
    let mut var = DVector::zeros(p);
    let mut vx = DVector::zeros(p);
    let mut vxw = DVector::zeros(p);
    let mut sums: Vec<DVector<f64>> = vec![DVector::zeros(p); 6];
    let mut trace = record.then(|| PathTrace {
        bias: vec![bias.clone()],
        var: vec![var.clone()],
    });
    let eye = DMatrix::<f64>::identity(p, p);
    for t in 1..=n {
        for (s, v) in sums.iter_mut().zip([&bias, &bx, &bxw, &var, &vx, &vxw]) {
            *s += v;
        }
        let g = schedule.gamma(t);
        let f = phi.row(t - 1).transpose();
        let a_sample = &eye - (&f * f.transpose()) * g;
        let a_x = &eye - sigma_hat * g;
        let a_xw = &eye - sigma_tilde * g;
        let kick = &f * (g * noise[t - 1]);
        bias = &a_sample * &bias;
        bx = &a_x * &bx;
        bxw = &a_xw * &bxw;
        var = &a_sample * &var + &kick;
        vx = &a_x * &vx + &kick;
        vxw = &a_xw * &vxw + &kick;
        let total = bias.norm() + bx.norm() + bxw.norm() + var.norm() + vx.norm() + vxw.norm();
        if !total.is_finite() {
            return Err(Error::Diverged {
                step: t,
                norm: total,
            });
        }
        if let Some(tr) = trace.as_mut() {
            tr.bias.push(bias.clone());
            tr.var.push(var.clone());
        }
    }
    let k = n as f64;
    let mut it = sums.into_iter().map(|s| s / k);
    let mut next = || it.next().expect("six accumulators");
    let avg = PathAverages {
        bias: next(),
        bx: next(),
        bxw: next(),
        var: next(),
        vx: next(),
        vxw: next(),
    };
    Ok((avg, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ActivationKind;
    use crate::optimizer::sgd_with_order;
    use crate::rng::{normal_vec, rng_from_seed};
    use crate::spectral::{expected_cov_relu, gram_cov, trace_ratio};

    type Instance = (
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DVector<f64>,
        Vec<f64>,
    );

    fn setup(n: usize, m: usize, d: usize, seed: u64) -> Instance {
        let mut rng = rng_from_seed(seed);
        let x = DMatrix::from_vec(n, d, normal_vec(&mut rng, n * d, 1.0));
        let map = FeatureMap::new(seed + 1, m, d, ActivationKind::Relu).unwrap();
        let phi = map.apply_batch(&x).unwrap();
        let sh = gram_cov(&phi);
        let st = expected_cov_relu(trace_ratio(&x).unwrap(), m)
            .unwrap()
            .assemble();
        let theta = DVector::from_vec(normal_vec(&mut rng, m, 1.0));
        let noise = normal_vec(&mut rng, n, 0.5);
        (phi, sh, st, theta, noise)
    }

    #[test]
    fn zero_noise_and_zero_target() {
        let (phi, sh, st, theta, _) = setup(6, 4, 3, 1);
        let s = StepSchedule::new(0.5, 0.5).unwrap();
        let (a, _) = run_paths_features(&phi, &sh, &st, &theta, &[0.0; 6], &s, false).unwrap();
        assert!(a
            .var
            .iter()
            .chain(a.vx.iter())
            .chain(a.vxw.iter())
            .all(|&v| v == 0.0));
        let noise = vec![1.0; 6];
        let (b, _) =
            run_paths_features(&phi, &sh, &st, &DVector::zeros(4), &noise, &s, false).unwrap();
        assert!(b
            .bias
            .iter()
            .chain(b.bx.iter())
            .chain(b.bxw.iter())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn two_step_hand_unrolling() {
        let (phi, sh, st, theta, noise) = setup(2, 3, 2, 2);
        let s = StepSchedule::new(0.7, 0.5).unwrap();
        let (avg, _) = run_paths_features(&phi, &sh, &st, &theta, &noise, &s, false).unwrap();
        let g1 = 0.7;
        let f1 = phi.row(0).transpose();
        let eye = DMatrix::<f64>::identity(3, 3);
        // Average over t = 0, 1 only needs eta_1.
        let b1 = (&eye - &f1 * f1.transpose() * g1) * (-&theta);
        let x1 = (&eye - &sh * g1) * (-&theta);
        let w1 = (&eye - &st * g1) * (-&theta);
        let v1 = &f1 * (g1 * noise[0]);
        let half = |a: DVector<f64>, b: DVector<f64>| (a + b) * 0.5;
        assert!((avg.bias - half(-&theta, b1)).amax() <= 1e-12);
        assert!((avg.bx - half(-&theta, x1)).amax() <= 1e-12);
        assert!((avg.bxw - half(-&theta, w1)).amax() <= 1e-12);
        for v in [&avg.var, &avg.vx, &avg.vxw] {
            assert!((v - &v1 * 0.5).amax() <= 1e-12);
        }
    }

    #[test]
    fn coupling_identity_dense() {
        let (phi, sh, st, theta, noise) = setup(30, 8, 4, 3);
        let s = StepSchedule::new(0.3, 0.5).unwrap();
        let (_, trace) = run_paths_features(&phi, &sh, &st, &theta, &noise, &s, true).unwrap();
        let trace = trace.unwrap();
        let y: Vec<f64> = (&phi * &theta)
            .iter()
            .zip(&noise)
            .map(|(f, e)| f + e)
            .collect();
        let order: Vec<usize> = (0..30).collect();
        let sgd = sgd_with_order(&phi, &y, &order, &s, DVector::zeros(8), true).unwrap();
        for (t, th) in sgd.trajectory.unwrap().iter().enumerate() {
            let gap = (th - &theta - &trace.bias[t] - &trace.var[t]).norm();
            assert!(gap <= 1e-10 * (1.0 + theta.norm()), "t = {t}: {gap}");
        }
    }

    #[test]
    fn shape_checks() {
        let (phi, sh, st, theta, noise) = setup(5, 3, 2, 4);
        let s = StepSchedule::new(0.3, 0.0).unwrap();
        assert!(run_paths_features(&phi, &sh, &st, &theta, &noise[..4], &s, false).is_err());
        let mut asym = sh.clone();
        asym[(0, 1)] += 1.0;
        assert!(matches!(
            run_paths_features(&phi, &asym, &st, &theta, &noise, &s, false),
            Err(Error::Asymmetric(_))
        ));
    }
}
