//! Synthetic data generators and the binary-digit dataset builder.

mod fixture;
mod idx;

pub use fixture::{
    render_digit, synthetic_digits, write_digit_fixture, DigitFixture, IMAGE_FILE, LABEL_FILE,
};
pub use idx::{
    load_idx_images, load_idx_labels, parse_idx_images, parse_idx_labels, write_idx_images,
    write_idx_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC,
};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::rng::{derive_seed, normal_vec, rng_from_seed, standard_normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovSpec {
    Identity,
    /// `Sigma_d = diag(k^{-exponent})`, `k = 1..d`.
    PowerLaw {
        exponent: f64,
    },
    /// Explicit `d x d` symmetric PSD matrix, given as rows.
    Explicit {
        matrix: Vec<Vec<f64>>,
    },
}

impl CovSpec {
    pub fn power_law(exponent: f64) -> Self {
        CovSpec::PowerLaw { exponent }
    }

    pub fn explicit(m: &DMatrix<f64>) -> Self {
        CovSpec::Explicit {
            matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    /// `Sigma_d^{1/2}`, or `None` for the identity.
    fn sqrt(&self, d: usize) -> Result<Option<DMatrix<f64>>> {
        match self {
            CovSpec::Identity => Ok(None),
            CovSpec::PowerLaw { exponent } => {
                if !(*exponent >= 0.0) || !exponent.is_finite() {
                    return Err(Error::invalid(format!(
                        "power-law exponent must be >= 0 (got {exponent})"
                    )));
                }
                let diag = DVector::from_fn(d, |k, _| ((k + 1) as f64).powf(-0.5 * exponent));
                Ok(Some(DMatrix::from_diagonal(&diag)))
            }
            CovSpec::Explicit { matrix } => {
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch {
                        context: "explicit input covariance",
                        expected: d,
                        actual: matrix.len(),
                    });
                }
                let s = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("input covariance"));
                }
                let scale = s.amax().max(1.0);
                let asym = (&s - s.transpose()).amax();
                if asym > 1e-10 * scale {
                    return Err(Error::Asymmetric(asym));
                }
                let eig = s.symmetric_eigen();
                let min = eig.eigenvalues.min();
                if min < -1e-10 * scale {
                    return Err(Error::NotPsd(min));
                }
                let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                let v = &eig.eigenvectors;
                Ok(Some(v * DMatrix::from_diagonal(&root) * v.transpose()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SyntheticLinear,
    SyntheticLaplace,
    IdxBinary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub fstar: Option<Vec<f64>>,
    pub noise_sd: f64,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<f64>,
        fstar: Option<Vec<f64>>,
        noise_sd: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("dataset needs n >= 1 and d >= 1"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if let Some(f) = &fstar {
            if f.len() != x.nrows() {
                return Err(Error::DimensionMismatch {
                    context: "dataset clean targets",
                    expected: x.nrows(),
                    actual: f.len(),
                });
            }
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::invalid(format!(
                "noise sd must be >= 0 (got {noise_sd})"
            )));
        }
        Ok(Self {
            x,
            y,
            fstar,
            noise_sd,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Rows `x = Sigma_d^{1/2} t` with `t` standard normal.
pub fn gen_inputs(seed: u64, n: usize, d: usize, cov: &CovSpec) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "need n, d >= 1 (got n = {n}, d = {d})"
        )));
    }
    let root = cov.sqrt(d)?;
    let mut rng = rng_from_seed(seed);
    let t = DMatrix::from_row_iterator(n, d, (0..n * d).map(|_| standard_normal(&mut rng)));
    Ok(match root {
        None => t,
        Some(r) => t * r,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceTarget {
    pub fstar_train: Vec<f64>,
    pub fstar_eval: Vec<f64>,
    pub y_train: Vec<f64>,
}

/// `f(x) = sum_j exp(-|x - x_j| / bandwidth) w_j` over the training points
/// `x_j`, with standard normal `w`.
pub fn gen_target_laplace(
    seed: u64,
    x_train: &DMatrix<f64>,
    x_eval: &DMatrix<f64>,
    bandwidth: f64,
    noise_sd: f64,
) -> Result<LaplaceTarget> {
    if x_train.nrows() == 0 {
        return Err(Error::invalid(
            "Laplace target needs at least one training point",
        ));
    }
    if x_eval.nrows() > 0 && x_eval.ncols() != x_train.ncols() {
        return Err(Error::DimensionMismatch {
            context: "Laplace target evaluation points",
            expected: x_train.ncols(),
            actual: x_eval.ncols(),
        });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be > 0 (got {bandwidth})"
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sd must be >= 0 (got {noise_sd})"
        )));
    }
    let n = x_train.nrows();
    let w = normal_vec(&mut rng_from_seed(derive_seed(seed, &[1])), n, 1.0);
    let eval = |x: &DMatrix<f64>| -> Vec<f64> {
        x.row_iter()
            .map(|r| {
                x_train
                    .row_iter()
                    .zip(&w)
                    .map(|(c, wj)| wj * (-(r - c).norm() / bandwidth).exp())
                    .sum()
            })
            .collect()
    };
    let fstar_train = eval(x_train);
    let fstar_eval = eval(x_eval);
    let y_train = if noise_sd == 0.0 {
        fstar_train.clone()
    } else {
        let eps = normal_vec(&mut rng_from_seed(derive_seed(seed, &[2])), n, noise_sd);
        fstar_train.iter().zip(eps).map(|(f, e)| f + e).collect()
    };
    Ok(LaplaceTarget {
        fstar_train,
        fstar_eval,
        y_train,
    })
}

/// Draws a Gaussian `theta_star` of norm `target_norm` and returns it with
/// `Phi theta_star` on the rows of `x`.
pub fn plant_rf_target(
    map: &FeatureMap,
    seed: u64,
    target_norm: f64,
    x: &DMatrix<f64>,
) -> Result<(DVector<f64>, Vec<f64>)> {
    if !(target_norm > 0.0) || !target_norm.is_finite() {
        return Err(Error::invalid(format!(
            "target norm must be > 0 (got {target_norm})"
        )));
    }
    let mut theta = DVector::from_vec(normal_vec(&mut rng_from_seed(seed), map.feature_dim(), 1.0));
    let norm = theta.norm();
    theta *= target_norm / norm;
    let fstar = (map.apply_batch(x)? * &theta).iter().copied().collect();
    Ok((theta, fstar))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitSplit {
    pub train: Dataset,
    /// All remaining samples of the two digits.
    pub test: Dataset,
}

/// Pixel value multiplier applied when flattening IDX images.
pub const DEFAULT_PIXEL_SCALE: f64 = 1.0 / 255.0;

pub fn make_binary_digit_dataset(
    images: &IdxImages,
    labels: &[u8],
    digit_a: u8,
    digit_b: u8,
    n_per_class: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<Dataset> {
    make_binary_digit_split(
        images,
        labels,
        digit_a,
        digit_b,
        n_per_class,
        seed,
        noise_sd,
        DEFAULT_PIXEL_SCALE,
    )
    .map(|s| s.train)
}

/// Draws `n_per_class` training images of each digit, labels `digit_a` as +1
/// and `digit_b` as -1, and shuffles the training order. Clean targets are
/// defined as `y - eps` for synthetic `eps ~ N(0, noise_sd^2)`.
#[allow(clippy::too_many_arguments)]
pub fn make_binary_digit_split(
    images: &IdxImages,
    labels: &[u8],
    digit_a: u8,
    digit_b: u8,
    n_per_class: usize,
    seed: u64,
    noise_sd: f64,
    pixel_scale: f64,
) -> Result<DigitSplit> {
    if images.n != labels.len() {
        return Err(Error::CountMismatch {
            images: images.n,
            labels: labels.len(),
        });
    }
    if digit_a == digit_b {
        return Err(Error::invalid("the two digits must differ"));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be >= 1"));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sd must be >= 0 (got {noise_sd})"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    let mut train = Vec::with_capacity(2 * n_per_class);
    let mut test = Vec::new();
    for digit in [digit_a, digit_b] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == digit).collect();
        if idx.len() < n_per_class {
            return Err(Error::InsufficientClass {
                digit,
                needed: n_per_class,
                found: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_per_class]);
        test.extend_from_slice(&idx[n_per_class..]);
    }
    train.shuffle(&mut rng);
    test.sort_unstable();

    let label = |i: usize| if labels[i] == digit_a { 1.0 } else { -1.0 };
    let build = |rows: &[usize], stream: u64| -> Result<Dataset> {
        let x = images.to_matrix(rows, pixel_scale);
        let y: Vec<f64> = rows.iter().map(|&i| label(i)).collect();
        let eps = normal_vec(
            &mut rng_from_seed(derive_seed(seed, &[stream])),
            rows.len(),
            noise_sd,
        );
        let fstar = y.iter().zip(&eps).map(|(y, e)| y - e).collect();
        Dataset::new(x, y, Some(fstar), noise_sd, Provenance::IdxBinary)
    };
    let train = build(&train, 2)?;
    let test = if test.is_empty() {
        // No held-out samples: an empty design is not a valid Dataset, so
        // reuse the training set and let callers notice via the count.
        train.clone()
    } else {
        build(&test, 3)?
    };
    Ok(DigitSplit { train, test })
}

/// Replaces the labels of a split with a planted teacher function: `theta`
/// drawn as in [`plant_rf_target`] for the `teacher` map, its outputs
/// standardized to zero mean and unit variance on the training inputs, plus
/// `N(0, noise_sd^2)` noise. The same affine standardization is applied to the
/// test inputs.
pub fn plant_teacher_labels(
    split: &DigitSplit,
    teacher: &FeatureMap,
    seed: u64,
    noise_sd: f64,
) -> Result<DigitSplit> {
    if !(noise_sd >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sd must be >= 0 (got {noise_sd})"
        )));
    }
    let (theta, f_train) = plant_rf_target(teacher, derive_seed(seed, &[1]), 1.0, &split.train.x)?;
    let f_test: Vec<f64> = (teacher.apply_batch(&split.test.x)? * &theta)
        .iter()
        .copied()
        .collect();
    let n = f_train.len() as f64;
    let mean = f_train.iter().sum::<f64>() / n;
    let sd = (f_train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::invalid(
            "planted teacher is constant on the training inputs",
        ));
    }
    let build = |ds: &Dataset, f: &[f64], stream: u64| -> Result<Dataset> {
        let fstar: Vec<f64> = f.iter().map(|v| (v - mean) / sd).collect();
        let eps = normal_vec(
            &mut rng_from_seed(derive_seed(seed, &[stream])),
            fstar.len(),
            noise_sd,
        );
        let y = fstar.iter().zip(&eps).map(|(f, e)| f + e).collect();
        Dataset::new(
            ds.x.clone(),
            y,
            Some(fstar),
            noise_sd,
            Provenance::IdxBinary,
        )
    };
    Ok(DigitSplit {
        train: build(&split.train, &f_train, 2)?,
        test: build(&split.test, &f_test, 3)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ActivationKind;

    #[test]
    fn teacher_labels_standardized() {
        let fx = synthetic_digits(1, 20, &[3, 7]);
        let split = make_binary_digit_split(
            &fx.images,
            &fx.labels,
            3,
            7,
            12,
            2,
            0.0,
            DEFAULT_PIXEL_SCALE,
        )
        .unwrap();
        let teacher = FeatureMap::new(5, 30, 784, ActivationKind::CosSin).unwrap();
        let planted = plant_teacher_labels(&split, &teacher, 9, 0.0).unwrap();
        let f = planted.train.fstar.as_ref().unwrap();
        let mean = f.iter().sum::<f64>() / 24.0;
        let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 24.0;
        assert!(mean.abs() <= 1e-12 && (var - 1.0).abs() <= 1e-12);
        assert_eq!(&planted.train.y, f);
        assert_eq!(planted.test.n(), 16);
        assert_eq!(planted.train.x, split.train.x);
        let noisy = plant_teacher_labels(&split, &teacher, 9, 0.5).unwrap();
        assert_ne!(noisy.train.y, noisy.train.fstar.unwrap());
    }

    #[test]
    fn identity_inputs_moments() {
        let x = gen_inputs(1, 10_000, 50, &CovSpec::Identity).unwrap();
        for j in [0, 17, 49] {
            let col = x.column(j);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 10_000.0;
            assert!((0.9..=1.1).contains(&var), "{var}");
        }
        let mean_sq = x.row_iter().map(|r| r.norm_squared() / 50.0).sum::<f64>() / 10_000.0;
        assert!((0.95..=1.05).contains(&mean_sq));
    }

    #[test]
    fn scalar_explicit_cov() {
        let x = gen_inputs(
            2,
            10_000,
            1,
            &CovSpec::Explicit {
                matrix: vec![vec![4.0]],
            },
        )
        .unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / 10_000.0;
        assert!((var / 4.0 - 1.0).abs() <= 0.1, "{var}");
    }

    #[test]
    fn explicit_cov_errors() {
        let not_psd = CovSpec::Explicit {
            matrix: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(matches!(
            gen_inputs(1, 3, 2, &not_psd),
            Err(Error::NotPsd(_))
        ));
        let wrong = CovSpec::Explicit {
            matrix: vec![vec![1.0]],
        };
        assert!(gen_inputs(1, 3, 2, &wrong).is_err());
        let asym = CovSpec::Explicit {
            matrix: vec![vec![1.0, 0.5], vec![0.0, 1.0]],
        };
        assert!(matches!(
            gen_inputs(1, 3, 2, &asym),
            Err(Error::Asymmetric(_))
        ));
        assert!(gen_inputs(1, 0, 2, &CovSpec::Identity).is_err());
    }

    #[test]
    fn explicit_cov_reproduced() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let x = gen_inputs(3, 40_000, 2, &CovSpec::explicit(&s)).unwrap();
        let emp = x.tr_mul(&x) / 40_000.0;
        assert!((emp - s).amax() <= 0.05);
    }

    #[test]
    fn power_law_variances() {
        let x = gen_inputs(4, 20_000, 4, &CovSpec::power_law(2.0)).unwrap();
        for k in 0..4 {
            let var = x.column(k).norm_squared() / 20_000.0;
            let want = ((k + 1) as f64).powi(-2);
            assert!((var / want - 1.0).abs() <= 0.05);
        }
    }

    #[test]
    fn identity_sample_cov_concentrates() {
        // For Gaussian rows E|S - I|_F^2 = d (d + 1) / n, so the normalized
        // distance concentrates at sqrt((d + 1) / n).
        let d = 50;
        let n = 10 * d;
        let x = gen_inputs(5, n, d, &CovSpec::Identity).unwrap();
        let s = x.tr_mul(&x) / n as f64;
        let dist = (s - DMatrix::identity(d, d)).norm() / (d as f64).sqrt();
        let want = ((d + 1) as f64 / n as f64).sqrt();
        assert!((dist / want - 1.0).abs() <= 0.1, "{dist} vs {want}");
    }

    #[test]
    fn laplace_target_cases() {
        let x = gen_inputs(6, 30, 5, &CovSpec::Identity).unwrap();
        let t = gen_target_laplace(1, &x, &x, 5.0, 0.0).unwrap();
        assert_eq!(t.y_train, t.fstar_train);
        assert_eq!(t.fstar_eval, t.fstar_train);

        let one = x.rows(0, 1).into_owned();
        let t1 = gen_target_laplace(9, &one, &one, 5.0, 0.0).unwrap();
        let w1 = normal_vec(&mut rng_from_seed(derive_seed(9, &[1])), 1, 1.0)[0];
        assert!((t1.fstar_train[0] - w1).abs() <= 1e-15);

        assert!(gen_target_laplace(1, &DMatrix::zeros(0, 5), &x, 5.0, 0.0).is_err());
        assert!(gen_target_laplace(1, &x, &x, 0.0, 0.0).is_err());
    }

    #[test]
    fn laplace_regime_runs() {
        let x = gen_inputs(7, 400, 50, &CovSpec::Identity).unwrap();
        let xe = gen_inputs(8, 100, 50, &CovSpec::Identity).unwrap();
        let t = gen_target_laplace(2, &x, &xe, 50.0, 0.1).unwrap();
        assert_eq!(t.fstar_eval.len(), 100);
        let resid: f64 = t
            .y_train
            .iter()
            .zip(&t.fstar_train)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((resid / 400.0 / 0.01 - 1.0).abs() <= 0.25);
    }

    #[test]
    fn planted_target() {
        let map = FeatureMap::new(3, 12, 4, ActivationKind::Relu).unwrap();
        let x = gen_inputs(9, 20, 4, &CovSpec::Identity).unwrap();
        assert!(plant_rf_target(&map, 1, 0.0, &x).is_err());
        let (theta, f) = plant_rf_target(&map, 1, 2.5, &x).unwrap();
        assert!((theta.norm() - 2.5).abs() <= 1e-12);
        for (i, fi) in f.iter().enumerate() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let want = map.apply(&row).unwrap().dot(&theta);
            assert!((fi - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(
            DMatrix::zeros(0, 2),
            vec![],
            None,
            0.0,
            Provenance::SyntheticLinear
        )
        .is_err());
        assert!(Dataset::new(
            DMatrix::zeros(2, 2),
            vec![1.0],
            None,
            0.0,
            Provenance::SyntheticLinear
        )
        .is_err());
        assert!(Dataset::new(
            DMatrix::zeros(2, 2),
            vec![1.0; 2],
            None,
            -1.0,
            Provenance::SyntheticLinear
        )
        .is_err());
    }

    fn tiny_images() -> (IdxImages, Vec<u8>) {
        let digits = synthetic_digits(4, 5, &[3, 7, 1]);
        (digits.images, digits.labels)
    }

    #[test]
    fn binary_dataset_small() {
        let (img, lab) = tiny_images();
        let ds = make_binary_digit_dataset(&img, &lab, 3, 7, 1, 0, 1.0).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 784);
        let mut ys = ds.y.clone();
        ys.sort_by(f64::total_cmp);
        assert_eq!(ys, vec![-1.0, 1.0]);
        assert!(ds.x.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(matches!(
            make_binary_digit_dataset(&img, &lab, 3, 7, 6, 0, 1.0),
            Err(Error::InsufficientClass {
                digit: 3,
                needed: 6,
                found: 5
            })
        ));
        assert!(matches!(
            make_binary_digit_dataset(&img, &lab[..3], 3, 7, 1, 0, 1.0),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn binary_split_noise_and_test_set() {
        let digits = synthetic_digits(5, 400, &[3, 7]);
        let split = make_binary_digit_split(
            &digits.images,
            &digits.labels,
            3,
            7,
            300,
            1,
            1.0,
            DEFAULT_PIXEL_SCALE,
        )
        .unwrap();
        assert_eq!(split.train.n(), 600);
        assert_eq!(split.test.n(), 200);
        let f = split.train.fstar.as_ref().unwrap();
        let eps: Vec<f64> = split.train.y.iter().zip(f).map(|(y, f)| y - f).collect();
        let mean = eps.iter().sum::<f64>() / 600.0;
        let sd = (eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 599.0).sqrt();
        assert!((0.9..=1.1).contains(&sd), "{sd}");
        assert!(mean.abs() <= 4.0 / 600f64.sqrt());
        let again = make_binary_digit_split(
            &digits.images,
            &digits.labels,
            3,
            7,
            300,
            1,
            1.0,
            DEFAULT_PIXEL_SCALE,
        )
        .unwrap();
        assert_eq!(again, split);
    }
}
