//! Random feature maps `phi(x) = sigma(W x / sqrt(d)) / sqrt(m)`.
//!
//! `W` is an `m x d` matrix of i.i.d. standard normal entries drawn once from a
//! seeded generator and never modified. The `1/sqrt(d)` input scaling is
//! applied inside [`FeatureMap::apply`] so `W` keeps its exact `N(0, 1)` law.
//!
//! For [`ActivationKind::CosSin`] each row of `W` produces two coordinates and
//! the output is laid out as `[cos(z_1..z_m), sin(z_1..z_m)]`, every coordinate
//! still scaled by `1/sqrt(m)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Identity,
    CosSin,
}

impl ActivationKind {
    pub fn output_multiplicity(self) -> usize {
        match self {
            ActivationKind::CosSin => 2,
            ActivationKind::Relu | ActivationKind::Identity => 1,
        }
    }

    /// Whether every output component is infinitely differentiable. Kinked
    /// activations have their single breakpoint at zero.
    pub fn is_smooth(self) -> bool {
        !matches!(self, ActivationKind::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Identity => "identity",
            ActivationKind::CosSin => "cossin",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            "cossin" | "gaussian" => Ok(ActivationKind::CosSin),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureMap {
    w: DMatrix<f64>,
    activation: ActivationKind,
    seed: u64,
}

impl FeatureMap {
    /// Draws `W` row by row from a ChaCha8 stream seeded with `seed`.
    pub fn new(seed: u64, m: usize, d: usize, activation: ActivationKind) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "feature map needs m >= 1 and d >= 1 (got m = {m}, d = {d})"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut w = DMatrix::zeros(m, d);
        for i in 0..m {
            for j in 0..d {
                w[(i, j)] = standard_normal(&mut rng);
            }
        }
        Ok(Self {
            w,
            activation,
            seed,
        })
    }

    /// Builds a map around an explicit weight matrix. Used by tests that need
    /// hand-picked weights.
    pub fn from_weights(w: DMatrix<f64>, activation: ActivationKind) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(Error::invalid("weight matrix must be non-empty"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature weights"));
        }
        Ok(Self {
            w,
            activation,
            seed: 0,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Output dimension `p = m * output_multiplicity`.
    pub fn feature_dim(&self) -> usize {
        self.m() * self.activation.output_multiplicity()
    }

    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                context: "feature map input",
                expected: self.d(),
                actual: x.len(),
            });
        }
        let m = self.m();
        let in_scale = 1.0 / (self.d() as f64).sqrt();
        let out_scale = 1.0 / (m as f64).sqrt();
        let mut out = DVector::zeros(self.feature_dim());
        for i in 0..m {
            let z = self.w.row(i).iter().zip(x).map(|(w, x)| w * x).sum::<f64>() * in_scale;
            self.write_activation(&mut out, i, z, out_scale);
        }
        Ok(out)
    }

    /// Maps every row of `x` (`n x d`) to a row of the returned `n x p` matrix.
    pub fn apply_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch {
                context: "feature map batch input",
                expected: self.d(),
                actual: x.ncols(),
            });
        }
        let n = x.nrows();
        let m = self.m();
        let p = self.feature_dim();
        if n == 0 {
            return Ok(DMatrix::zeros(0, p));
        }
        let in_scale = 1.0 / (self.d() as f64).sqrt();
        let out_scale = 1.0 / (m as f64).sqrt();
        // Pre-activations in one GEMM; the reduction order differs from
        // `apply`, so the two agree to rounding rather than bit-for-bit.
        let z = x * self.w.transpose();
        let mut out = DMatrix::zeros(n, p);
        for i in 0..m {
            for r in 0..n {
                let zi = z[(r, i)] * in_scale;
                match self.activation {
                    ActivationKind::Relu => out[(r, i)] = zi.max(0.0) * out_scale,
                    ActivationKind::Identity => out[(r, i)] = zi * out_scale,
                    ActivationKind::CosSin => {
                        let (s, c) = zi.sin_cos();
                        out[(r, i)] = c * out_scale;
                        out[(r, m + i)] = s * out_scale;
                    }
                }
            }
        }
        Ok(out)
    }

    fn write_activation(&self, out: &mut DVector<f64>, i: usize, z: f64, scale: f64) {
        match self.activation {
            ActivationKind::Relu => out[i] = z.max(0.0) * scale,
            ActivationKind::Identity => out[i] = z * scale,
            ActivationKind::CosSin => {
                let (s, c) = z.sin_cos();
                out[i] = c * scale;
                out[self.m() + i] = s * scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| standard_normal(&mut rng))
    }

    #[test]
    fn same_seed_same_weights() {
        let a = FeatureMap::new(7, 3, 2, ActivationKind::Relu).unwrap();
        let b = FeatureMap::new(7, 3, 2, ActivationKind::Relu).unwrap();
        assert_eq!(a.feature_dim(), 3);
        assert_eq!(a.weights(), b.weights());
        let c = FeatureMap::new(8, 3, 2, ActivationKind::Relu).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn cossin_doubles_feature_dim() {
        let map = FeatureMap::new(7, 3, 2, ActivationKind::CosSin).unwrap();
        assert_eq!(map.feature_dim(), 6);
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(FeatureMap::new(1, 0, 2, ActivationKind::Relu).is_err());
        assert!(FeatureMap::new(1, 2, 0, ActivationKind::Relu).is_err());
    }

    #[test]
    fn weight_moments_match_standard_normal() {
        let map = FeatureMap::new(11, 100, 100, ActivationKind::Relu).unwrap();
        let w = map.weights();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((0.95..=1.05).contains(&var), "var {var}");
    }

    #[test]
    fn zero_input() {
        let relu = FeatureMap::new(3, 5, 4, ActivationKind::Relu).unwrap();
        let out = relu.apply(&[0.0; 4]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(out.len(), 5);

        let cs = FeatureMap::new(3, 5, 4, ActivationKind::CosSin).unwrap();
        let out = cs.apply(&[0.0; 4]).unwrap();
        let s = 1.0 / 5f64.sqrt();
        assert!(out.rows(0, 5).iter().all(|&v| v == s));
        assert!(out.rows(5, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_relu() {
        let map = FeatureMap::from_weights(DMatrix::from_element(1, 1, 2.0), ActivationKind::Relu)
            .unwrap();
        assert_eq!(map.apply(&[3.0]).unwrap()[0], 6.0);
        assert_eq!(map.apply(&[-3.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let map = FeatureMap::new(1, 2, 3, ActivationKind::Relu).unwrap();
        assert!(matches!(
            map.apply(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(map.apply_batch(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn batch_matches_rows() {
        let map = FeatureMap::new(5, 6, 3, ActivationKind::Relu).unwrap();
        let x = random_matrix(9, 4, 3);
        let phi = map.apply_batch(&x).unwrap();
        for r in 0..4 {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            let single = map.apply(&row).unwrap();
            for c in 0..map.feature_dim() {
                assert!((phi[(r, c)] - single[c]).abs() <= 1e-15);
            }
        }
        let one = x.rows(0, 1).into_owned();
        let single_row: Vec<f64> = x.row(0).iter().copied().collect();
        let a = map.apply_batch(&one).unwrap();
        let b = map.apply(&single_row).unwrap();
        for c in 0..map.feature_dim() {
            assert!((a[(0, c)] - b[c]).abs() <= 1e-15);
        }
    }

    #[test]
    fn empty_batch() {
        let map = FeatureMap::new(5, 6, 3, ActivationKind::CosSin).unwrap();
        let phi = map.apply_batch(&DMatrix::zeros(0, 3)).unwrap();
        assert_eq!(phi.shape(), (0, 12));
    }

    #[test]
    fn cossin_feature_norm_is_one() {
        let map = FeatureMap::new(2, 17, 5, ActivationKind::CosSin).unwrap();
        let x = random_matrix(3, 20, 5) * 4.0;
        let phi = map.apply_batch(&x).unwrap();
        let bound = 1.0 / 17f64.sqrt();
        for r in 0..20 {
            let row = phi.row(r);
            assert!((row.norm_squared() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|v| v.abs() <= bound + 1e-15));
        }
    }

    #[test]
    fn relu_features_nonnegative() {
        let map = FeatureMap::new(4, 9, 5, ActivationKind::Relu).unwrap();
        let phi = map.apply_batch(&random_matrix(8, 30, 5)).unwrap();
        assert!(phi.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn lipschitz_spot_check() {
        for act in [
            ActivationKind::Relu,
            ActivationKind::Identity,
            ActivationKind::CosSin,
        ] {
            let map = FeatureMap::new(21, 12, 6, act).unwrap();
            let spectral = map.weights().clone().svd(false, false).singular_values[0];
            let bound_scale = spectral / (6f64.sqrt() * 12f64.sqrt());
            let xs = random_matrix(22, 10, 6);
            let ys = random_matrix(23, 10, 6);
            for r in 0..10 {
                let x: Vec<f64> = xs.row(r).iter().copied().collect();
                let y: Vec<f64> = ys.row(r).iter().copied().collect();
                let dist = (xs.row(r) - ys.row(r)).norm();
                let fd = (map.apply(&x).unwrap() - map.apply(&y).unwrap()).norm();
                // CosSin stacks two 1-Lipschitz maps per row, hence the sqrt(2).
                let mult = (act.output_multiplicity() as f64).sqrt();
                assert!(fd <= mult * dist * bound_scale + 1e-12, "{act}: {fd}");
            }
        }
    }
}
