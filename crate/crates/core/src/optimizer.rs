//! Averaged SGD with polynomially decaying steps, and the minimum-norm
//! least-squares baseline.
//!
//! The SGD update is `theta_t = theta_{t-1} + gamma_t (y_t - <theta_{t-1}, phi_t>) phi_t`
//! with `gamma_t = gamma0 * t^{-zeta}`. The returned estimator is
//! `(1/N) sum_{t=0}^{N-1} theta_t`: it contains the initial point and leaves out
//! the final iterate, which is still returned as `theta_last`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::rng::{derive_seed, normal_vec, rng_from_seed};

pub const DIVERGENCE_NORM: f64 = 1e12;
pub const DEFAULT_SVD_TOL: f64 = 1e-12;

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub gamma0: f64,
    pub zeta: f64,
}

impl StepSchedule {
    pub fn new(gamma0: f64, zeta: f64) -> Result<Self> {
        let s = Self { gamma0, zeta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return Err(Error::invalid(format!(
                "gamma0 must be > 0 (got {})",
                self.gamma0
            )));
        }
        if !(0.0..1.0).contains(&self.zeta) {
            return Err(Error::invalid(format!(
                "zeta must lie in [0, 1) (got {})",
                self.zeta
            )));
        }
        Ok(())
    }

    pub fn step_size(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("step index starts at 1"));
        }
        Ok(self.gamma(t))
    }

    #[inline]
    pub(crate) fn gamma(&self, t: usize) -> f64 {
        if self.zeta == 0.0 {
            self.gamma0
        } else {
            self.gamma0 * (t as f64).powf(-self.zeta)
        }
    }
}

pub fn step_size(schedule: &StepSchedule, t: usize) -> Result<f64> {
    schedule.step_size(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum InitScheme {
    Zero,
    Constant(f64),
    /// Minimum-norm fit of the training labels plus i.i.d. `N(0, sd^2)` noise.
    NearMinNorm(f64),
}

#[derive(Debug, Clone)]
pub struct SgdOutcome {
    pub theta_bar: DVector<f64>,
    pub theta_last: DVector<f64>,
    /// `theta_0, ..., theta_N` when requested.
    pub trajectory: Option<Vec<DVector<f64>>>,
    pub stability_warning: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SgdOptions {
    pub epochs: usize,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            epochs: 1,
            seed: 0,
            record_trajectory: false,
        }
    }
}

/// Averaged SGD on raw inputs. The first epoch visits samples in the given
/// order; later epochs are reshuffled from `seed`.
pub fn sgd_average(
    map: &FeatureMap,
    x: &DMatrix<f64>,
    y: &[f64],
    schedule: &StepSchedule,
    init: InitScheme,
    epochs: usize,
    seed: u64,
) -> Result<SgdOutcome> {
    let phi = map.apply_batch(x)?;
    let opts = SgdOptions {
        epochs,
        seed,
        record_trajectory: false,
    };
    sgd_average_features(&phi, y, schedule, init, &opts)
}

pub fn sgd_average_features(
    phi: &DMatrix<f64>,
    y: &[f64],
    schedule: &StepSchedule,
    init: InitScheme,
    opts: &SgdOptions,
) -> Result<SgdOutcome> {
    schedule.validate()?;
    check_labels(phi, y)?;
    if opts.epochs == 0 {
        return Err(Error::invalid("epochs must be >= 1"));
    }
    let theta0 = initial_point(phi, y, init, opts.seed)?;
    let n = phi.nrows();
    let mut order: Vec<usize> = Vec::with_capacity(n * opts.epochs);
    order.extend(0..n);
    for epoch in 1..opts.epochs {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = rng_from_seed(derive_seed(opts.seed, &[SHUFFLE_STREAM, epoch as u64]));
        perm.shuffle(&mut rng);
        order.extend(perm);
    }
    sgd_with_order(phi, y, &order, schedule, theta0, opts.record_trajectory)
}

pub fn initial_point(
    phi: &DMatrix<f64>,
    y: &[f64],
    init: InitScheme,
    seed: u64,
) -> Result<DVector<f64>> {
    let p = phi.ncols();
    match init {
        InitScheme::Zero => Ok(DVector::zeros(p)),
        InitScheme::Constant(c) => Ok(DVector::from_element(p, c)),
        InitScheme::NearMinNorm(sd) => {
            if !(sd >= 0.0) {
                return Err(Error::invalid(format!(
                    "init noise sd must be >= 0 (got {sd})"
                )));
            }
            let mut theta = min_norm_fit(phi, y, DEFAULT_SVD_TOL)?;
            let mut rng = rng_from_seed(derive_seed(seed, &[INIT_STREAM]));
            theta += DVector::from_vec(normal_vec(&mut rng, p, sd));
            Ok(theta)
        }
    }
}

/// Core SGD loop over an explicit visiting order (indices into the rows of
/// `phi`). Step `t` (1-based) uses row `order[t - 1]`.
pub fn sgd_with_order(
    phi: &DMatrix<f64>,
    y: &[f64],
    order: &[usize],
    schedule: &StepSchedule,
    theta0: DVector<f64>,
    record_trajectory: bool,
) -> Result<SgdOutcome> {
    check_labels(phi, y)?;
    let (n, p) = phi.shape();
    if theta0.len() != p {
        return Err(Error::DimensionMismatch {
            context: "initial iterate",
            expected: p,
            actual: theta0.len(),
        });
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!(
            "sample index {bad} out of range for n = {n}"
        )));
    }
    if order.is_empty() {
        return Err(Error::invalid("SGD needs at least one step"));
    }
    let trace = phi.norm_squared() / n as f64;
    let stability_warning = schedule.gamma0 * trace > 1.0 + 1e-12;

    // Row access on a column-major matrix is strided; work on the transpose.
    let phi_t = phi.transpose();
    let mut theta = theta0;
    let mut sum = DVector::zeros(p);
    let mut trajectory = record_trajectory.then(|| vec![theta.clone()]);
    for (k, &i) in order.iter().enumerate() {
        let t = k + 1;
        sum += &theta;
        let row = phi_t.column(i);
        let resid = y[i] - row.dot(&theta);
        theta.axpy(schedule.gamma(t) * resid, &row, 1.0);
        let norm = theta.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged { step: t, norm });
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(theta.clone());
        }
    }
    Ok(SgdOutcome {
        theta_bar: sum / order.len() as f64,
        theta_last: theta,
        trajectory,
        stability_warning,
        steps: order.len(),
    })
}

fn check_labels(phi: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if phi.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: phi.nrows(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// `Phi^+ y` with singular values below `svd_tol * sigma_max` treated as zero.
///
/// The SVD is taken of the small triangular factor of a QR decomposition of
/// the tall orientation, which is much cheaper than a direct SVD of a wide
/// matrix.
pub fn min_norm_fit(phi: &DMatrix<f64>, y: &[f64], svd_tol: f64) -> Result<DVector<f64>> {
    check_labels(phi, y)?;
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("labels"));
    }
    if !(svd_tol >= 0.0) {
        return Err(Error::invalid(format!(
            "svd_tol must be >= 0 (got {svd_tol})"
        )));
    }
    let (n, p) = phi.shape();
    if n == 0 || p == 0 {
        return Ok(DVector::zeros(p));
    }
    let y = DVector::from_column_slice(y);
    let wide = p >= n;
    let tall = if wide { phi.transpose() } else { phi.clone() };
    let qr = tall.qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let cutoff = svd_tol * s.max();
    let s_inv = s.map(|v| if v > cutoff && v > 0.0 { 1.0 / v } else { 0.0 });
    if wide {
        // Phi = R^T Q^T = V S U^T Q^T, so Phi^+ = Q U S^+ V^T.
        let c = (&v_t * y).component_mul(&s_inv);
        Ok(q * (u * c))
    } else {
        // Phi = Q U S V^T, so Phi^+ = V S^+ U^T Q^T.
        let c = (u.tr_mul(&q.tr_mul(&y))).component_mul(&s_inv);
        Ok(v_t.tr_mul(&c))
    }
}

/// Mean squared residual `|Phi theta - y|^2 / n`.
pub fn mse(phi: &DMatrix<f64>, theta: &DVector<f64>, y: &[f64]) -> Result<f64> {
    check_labels(phi, y)?;
    if theta.len() != phi.ncols() {
        return Err(Error::DimensionMismatch {
            context: "parameter vector",
            expected: phi.ncols(),
            actual: theta.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("mse of an empty sample"));
    }
    let pred = phi * theta;
    Ok(pred
        .iter()
        .zip(y)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / y.len() as f64)
}

pub fn test_mse(
    theta: &DVector<f64>,
    map: &FeatureMap,
    x_test: &DMatrix<f64>,
    y_test: &[f64],
) -> Result<f64> {
    mse(&map.apply_batch(x_test)?, theta, y_test)
}

/// `<v, Sigma_hat v>` with `v = theta_bar - theta_star`.
pub fn excess_risk(
    theta_bar: &DVector<f64>,
    theta_star: &DVector<f64>,
    sigma_hat: &DMatrix<f64>,
) -> Result<f64> {
    let p = sigma_hat.nrows();
    if sigma_hat.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "covariance (not square)",
            expected: p,
            actual: sigma_hat.ncols(),
        });
    }
    for v in [theta_bar, theta_star] {
        if v.len() != p {
            return Err(Error::DimensionMismatch {
                context: "excess risk vector",
                expected: p,
                actual: v.len(),
            });
        }
    }
    let asym = (sigma_hat - sigma_hat.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::Asymmetric(asym));
    }
    let v = theta_bar - theta_star;
    Ok(v.dot(&(sigma_hat * &v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ActivationKind;
    use crate::rng::standard_normal;
    use proptest::prelude::*;

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| standard_normal(&mut rng))
    }

    fn random_vec(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        normal_vec(&mut rng, len, 1.0)
    }

    #[test]
    fn step_sizes() {
        let s = StepSchedule::new(1.0, 0.5).unwrap();
        assert_eq!(s.step_size(4).unwrap(), 0.5);
        assert!(s.step_size(0).is_err());
        let c = StepSchedule::new(1.0, 0.0).unwrap();
        assert!((1..50).all(|t| c.step_size(t).unwrap() == 1.0));
        assert_eq!(
            StepSchedule::new(0.25, 0.9).unwrap().step_size(1).unwrap(),
            0.25
        );
        assert!(StepSchedule::new(1.0, 1.0).is_err());
        assert!(StepSchedule::new(0.0, 0.5).is_err());
        assert!(StepSchedule::new(1.0, -0.1).is_err());
    }

    #[test]
    fn zero_labels_fixed_point() {
        let map = FeatureMap::new(1, 5, 3, ActivationKind::Relu).unwrap();
        let x = random_matrix(2, 8, 3);
        let s = StepSchedule::new(0.5, 0.0).unwrap();
        let out = sgd_average(&map, &x, &[0.0; 8], &s, InitScheme::Zero, 1, 0).unwrap();
        assert!(out.theta_bar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample() {
        let map = FeatureMap::new(1, 4, 3, ActivationKind::CosSin).unwrap();
        let x = random_matrix(3, 1, 3);
        let s = StepSchedule::new(0.7, 0.5).unwrap();
        let out = sgd_average(&map, &x, &[2.0], &s, InitScheme::Zero, 1, 0).unwrap();
        assert!(out.theta_bar.iter().all(|&v| v == 0.0));
        let phi = map.apply_batch(&x).unwrap();
        let want = phi.row(0).transpose() * (0.7 * 2.0);
        assert!((out.theta_last - want).amax() <= 1e-15);
    }

    #[test]
    fn matches_dense_recursion() {
        let phi = random_matrix(5, 5, 4) * 0.4;
        let y = random_vec(6, 5);
        for zeta in [0.0, 0.5, 0.9] {
            let s = StepSchedule::new(0.8, zeta).unwrap();
            let out = sgd_average_features(
                &phi,
                &y,
                &s,
                InitScheme::Constant(0.1),
                &SgdOptions::default(),
            )
            .unwrap();
            let mut theta = DVector::from_element(4, 0.1);
            let mut sum = DVector::zeros(4);
            for t in 1..=5 {
                sum += &theta;
                let f = phi.row(t - 1).transpose();
                let g = s.step_size(t).unwrap();
                let a = DMatrix::identity(4, 4) - (&f * f.transpose()) * g;
                theta = a * theta + f * (g * y[t - 1]);
            }
            assert!((out.theta_bar - sum / 5.0).amax() <= 1e-12);
            assert!((out.theta_last - theta).amax() <= 1e-12);
        }
    }

    #[test]
    fn trajectory_and_epochs() {
        let phi = random_matrix(7, 6, 3) * 0.3;
        let y = random_vec(8, 6);
        let s = StepSchedule::new(0.5, 0.0).unwrap();
        let opts = SgdOptions {
            epochs: 3,
            seed: 4,
            record_trajectory: true,
        };
        let out = sgd_average_features(&phi, &y, &s, InitScheme::Zero, &opts).unwrap();
        let tr = out.trajectory.as_ref().unwrap();
        assert_eq!(tr.len(), 19);
        assert_eq!(out.steps, 18);
        let mean = tr[..18].iter().fold(DVector::zeros(3), |a, b| a + b) / 18.0;
        assert!((mean - &out.theta_bar).amax() <= 1e-14);
        let again = sgd_average_features(&phi, &y, &s, InitScheme::Zero, &opts).unwrap();
        assert_eq!(again.theta_bar, out.theta_bar);
    }

    #[test]
    fn stability_warning_and_divergence() {
        let phi = random_matrix(9, 20, 5);
        let y = random_vec(10, 20);
        let trace = phi.norm_squared() / 20.0;
        let ok = StepSchedule::new(0.9 / trace, 0.0).unwrap();
        let out =
            sgd_average_features(&phi, &y, &ok, InitScheme::Zero, &SgdOptions::default()).unwrap();
        assert!(!out.stability_warning);
        let bad = StepSchedule::new(50.0 / trace, 0.0).unwrap();
        let err = sgd_average_features(&phi, &y, &bad, InitScheme::Zero, &SgdOptions::default());
        assert!(matches!(err, Err(Error::Diverged { .. })), "{err:?}");
    }

    #[test]
    fn shape_errors() {
        let phi = random_matrix(1, 4, 3);
        let s = StepSchedule::new(0.1, 0.0).unwrap();
        assert!(sgd_average_features(
            &phi,
            &[0.0; 3],
            &s,
            InitScheme::Zero,
            &SgdOptions::default()
        )
        .is_err());
        let opts = SgdOptions {
            epochs: 0,
            ..SgdOptions::default()
        };
        assert!(sgd_average_features(&phi, &[0.0; 4], &s, InitScheme::Zero, &opts).is_err());
        assert!(sgd_with_order(&phi, &[0.0; 4], &[4], &s, DVector::zeros(3), false).is_err());
    }

    #[test]
    fn min_norm_identity() {
        let y = [1.0, -2.0, 3.5];
        let theta = min_norm_fit(&DMatrix::identity(3, 3), &y, DEFAULT_SVD_TOL).unwrap();
        assert!((theta - DVector::from_column_slice(&y)).amax() <= 1e-14);
    }

    #[test]
    fn min_norm_wide_matches_normal_equations() {
        let phi = random_matrix(11, 3, 5);
        let y = random_vec(12, 3);
        let theta = min_norm_fit(&phi, &y, DEFAULT_SVD_TOL).unwrap();
        let gram = &phi * phi.transpose();
        let alpha = gram
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&y))
            .unwrap();
        let oracle = phi.transpose() * alpha;
        assert!((&theta - &oracle).amax() <= 1e-10);
        // Any other solution differs by a null-space vector and is longer.
        let null = DVector::from_column_slice(&random_vec(13, 5));
        let proj = &null - phi.transpose() * gram.clone().lu().solve(&(&phi * &null)).unwrap();
        let other = &oracle + proj * 0.7;
        assert!((&phi * &other - DVector::from_column_slice(&y)).amax() <= 1e-10);
        assert!(theta.norm() <= other.norm());
    }

    #[test]
    fn min_norm_tall_matches_least_squares() {
        let phi = random_matrix(14, 12, 4);
        let y = random_vec(15, 12);
        let theta = min_norm_fit(&phi, &y, DEFAULT_SVD_TOL).unwrap();
        let normal = phi
            .tr_mul(&phi)
            .lu()
            .solve(&phi.tr_mul(&DVector::from_column_slice(&y)))
            .unwrap();
        assert!((theta - normal).amax() <= 1e-10);
    }

    #[test]
    fn min_norm_rank_deficient() {
        // Two identical columns: the minimum-norm solution splits the weight.
        let mut phi = random_matrix(16, 6, 2);
        phi = DMatrix::from_fn(6, 3, |i, j| phi[(i, j.min(1))]);
        let y = random_vec(17, 6);
        let theta = min_norm_fit(&phi, &y, DEFAULT_SVD_TOL).unwrap();
        assert!((theta[1] - theta[2]).abs() <= 1e-10);
    }

    #[test]
    fn min_norm_duplicate_row_invariance() {
        let phi = random_matrix(18, 10, 4);
        let y = random_vec(19, 10);
        let base = min_norm_fit(&phi, &y, DEFAULT_SVD_TOL).unwrap();
        let mut phi2 = phi.clone().insert_row(10, 0.0);
        phi2.row_mut(10).copy_from(&phi.row(3));
        // Duplicating a row reweights the least-squares objective, so this only
        // holds for consistent systems: use noiseless labels.
        let y_clean: Vec<f64> = (&phi * &base).iter().copied().collect();
        let mut y2_clean = y_clean.clone();
        y2_clean.push(y_clean[3]);
        let a = min_norm_fit(&phi, &y_clean, DEFAULT_SVD_TOL).unwrap();
        let b = min_norm_fit(&phi2, &y2_clean, DEFAULT_SVD_TOL).unwrap();
        assert!((a - b).amax() <= 1e-10);
    }

    #[test]
    fn min_norm_rejects_non_finite() {
        let mut phi = random_matrix(20, 3, 3);
        phi[(1, 1)] = f64::NAN;
        assert!(matches!(
            min_norm_fit(&phi, &[0.0; 3], DEFAULT_SVD_TOL),
            Err(Error::NonFinite(_))
        ));
        assert!(min_norm_fit(&DMatrix::identity(2, 2), &[f64::INFINITY, 0.0], 1e-12).is_err());
    }

    #[test]
    fn near_min_norm_init() {
        let phi = random_matrix(21, 4, 10);
        let y = random_vec(22, 4);
        let clean = initial_point(&phi, &y, InitScheme::NearMinNorm(0.0), 1).unwrap();
        let mn = min_norm_fit(&phi, &y, DEFAULT_SVD_TOL).unwrap();
        assert_eq!(clean, mn);
        let noisy = initial_point(&phi, &y, InitScheme::NearMinNorm(1.0), 1).unwrap();
        assert!((noisy - mn).norm() > 0.5);
    }

    #[test]
    fn excess_risk_cases() {
        let theta = DVector::from_column_slice(&random_vec(23, 4));
        let s = DMatrix::identity(4, 4);
        assert_eq!(excess_risk(&theta, &theta, &s).unwrap(), 0.0);
        let zero = DVector::zeros(4);
        assert!((excess_risk(&theta, &zero, &s).unwrap() - theta.norm_squared()).abs() <= 1e-14);
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]));
        let want: f64 = (0..4).map(|i| (i + 1) as f64 * theta[i].powi(2)).sum();
        assert!((excess_risk(&theta, &zero, &diag).unwrap() - want).abs() <= 1e-13);
        let mut asym = DMatrix::identity(4, 4);
        asym[(0, 1)] = 1e-6;
        assert!(matches!(
            excess_risk(&theta, &zero, &asym),
            Err(Error::Asymmetric(_))
        ));
    }

    #[test]
    fn train_mse_non_increasing_with_constant_steps() {
        for seed in 0..5 {
            let map = FeatureMap::new(seed, 30, 5, ActivationKind::Relu).unwrap();
            let x = random_matrix(100 + seed, 200, 5);
            let phi = map.apply_batch(&x).unwrap();
            let theta_star = DVector::from_column_slice(&random_vec(200 + seed, 30));
            let y: Vec<f64> = (&phi * &theta_star).iter().copied().collect();
            let trace = phi.norm_squared() / 200.0;
            let s = StepSchedule::new(0.5 / trace, 0.0).unwrap();
            let mut prev = f64::INFINITY;
            for n in [10, 25, 50, 100, 200] {
                let sub = phi.rows(0, n).into_owned();
                let out = sgd_average_features(
                    &sub,
                    &y[..n],
                    &s,
                    InitScheme::Zero,
                    &SgdOptions::default(),
                )
                .unwrap();
                let full = mse(&phi, &out.theta_bar, &y).unwrap();
                assert!(full <= prev + 1e-8, "seed {seed} n {n}: {full} > {prev}");
                prev = full;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sgd_and_min_norm_are_linear_in_labels(seed in 0u64..1000, c in -5.0f64..5.0) {
            let phi = random_matrix(seed, 7, 4) * 0.4;
            let y = random_vec(seed + 1, 7);
            let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
            let s = StepSchedule::new(0.6, 0.5).unwrap();
            let opts = SgdOptions { record_trajectory: true, ..SgdOptions::default() };
            let a = sgd_average_features(&phi, &y, &s, InitScheme::Zero, &opts).unwrap();
            let b = sgd_average_features(&phi, &cy, &s, InitScheme::Zero, &opts).unwrap();
            for (ta, tb) in a.trajectory.unwrap().iter().zip(b.trajectory.unwrap().iter()) {
                prop_assert!((ta * c - tb).amax() <= 1e-12 * (1.0 + ta.amax() * c.abs()));
            }
            let ma = min_norm_fit(&phi, &y, DEFAULT_SVD_TOL).unwrap();
            let mb = min_norm_fit(&phi, &cy, DEFAULT_SVD_TOL).unwrap();
            prop_assert!((ma * c - mb).amax() <= 1e-10 * (1.0 + c.abs()));
        }

        #[test]
        fn sgd_is_deterministic(seed in 0u64..1000) {
            let phi = random_matrix(seed, 9, 3) * 0.4;
            let y = random_vec(seed + 1, 9);
            let s = StepSchedule::new(0.4, 0.3).unwrap();
            let opts = SgdOptions { epochs: 2, seed, record_trajectory: false };
            let a = sgd_average_features(&phi, &y, &s, InitScheme::NearMinNorm(1.0), &opts).unwrap();
            let b = sgd_average_features(&phi, &y, &s, InitScheme::NearMinNorm(1.0), &opts).unwrap();
            prop_assert_eq!(a.theta_bar, b.theta_bar);
        }
    }
}
