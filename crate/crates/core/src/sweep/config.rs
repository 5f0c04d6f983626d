//! TOML sweep configuration.
//!
//! A minimal file needs `activation`, `m_grid`, `n` and a `[data]` table:
//!
//! ```toml
//! activation = "cossin"
//! m_grid = [75, 150, 300, 600]
//! n = 600
//! d = 20
//!
//! [data]
//! kind = "synthetic"
//! ```
//!
//! Defaults: `seed = 0`, `epochs = 1`, `repetitions = 1`, `init = zero`, one
//! schedule `{ gamma0 = 1.0, zeta = 0.5 }`, no decomposition, CSV written to
//! `sweep.csv` and one plot of both test-MSE columns to `test_mse.svg`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{CovSpec, DEFAULT_PIXEL_SCALE};
use crate::error::{Error, Result};
use crate::features::ActivationKind;
use crate::optimizer::{InitScheme, StepSchedule};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub seed: u64,
    pub activation: ActivationKind,
    pub m_grid: Vec<usize>,
    pub n: usize,
    /// Input dimension; required for synthetic data, checked against the
    /// image size for IDX data.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default = "default_schedules")]
    pub schedules: Vec<StepSchedule>,
    #[serde(default = "one")]
    pub epochs: usize,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "default_init")]
    pub init: InitScheme,
    /// Worker threads; 0 or absent uses every core.
    #[serde(default)]
    pub parallelism: Option<usize>,
    pub data: DataSource,
    #[serde(default)]
    pub decomposition: Option<DecompositionSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> usize {
    1
}

fn default_schedules() -> Vec<StepSchedule> {
    vec![StepSchedule {
        gamma0: 1.0,
        zeta: 0.5,
    }]
}

fn default_init() -> InitScheme {
    InitScheme::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTarget {
    /// Laplace-kernel expansion over the training points.
    Laplace,
    /// `<beta, x> / sqrt(d)` with standard normal `beta`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdxTarget {
    /// `+1` for the first digit, `-1` for the second.
    Digits,
    /// Standardized output of a random CosSin teacher plus noise.
    Planted,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default = "identity_cov")]
        cov: CovSpec,
        #[serde(default = "laplace")]
        target: SyntheticTarget,
        /// Defaults to `sqrt(d)`.
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default = "default_synthetic_noise")]
        noise_sd: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_digits")]
        digits: [u8; 2],
        #[serde(default = "default_pixel_scale")]
        pixel_scale: f64,
        /// Noise used to define clean targets (digit labels) or added to the
        /// teacher output (planted labels).
        #[serde(default = "default_idx_noise")]
        noise_sd: f64,
        #[serde(default = "digits_target")]
        target: IdxTarget,
        #[serde(default = "default_teacher_m")]
        teacher_m: usize,
    },
}

fn identity_cov() -> CovSpec {
    CovSpec::Identity
}
fn laplace() -> SyntheticTarget {
    SyntheticTarget::Laplace
}
fn default_n_test() -> usize {
    200
}
fn default_synthetic_noise() -> f64 {
    0.1
}
fn default_digits() -> [u8; 2] {
    [3, 7]
}
fn default_pixel_scale() -> f64 {
    DEFAULT_PIXEL_SCALE
}
fn default_idx_noise() -> f64 {
    1.0
}
fn digits_target() -> IdxTarget {
    IdxTarget::Digits
}
fn default_teacher_m() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Train,
    HeldOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Clean,
    Planted,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    #[serde(default = "one")]
    pub n_w: usize,
    #[serde(default = "two")]
    pub n_noise: usize,
    #[serde(default = "one")]
    pub n_order: usize,
    #[serde(default = "train_metric")]
    pub metric: MetricKind,
    #[serde(default = "clean_target")]
    pub target: TargetKind,
    #[serde(default = "unit")]
    pub target_norm: f64,
}

impl Default for DecompositionSpec {
    fn default() -> Self {
        Self {
            n_w: 1,
            n_noise: 2,
            n_order: 1,
            metric: MetricKind::Train,
            target: TargetKind::Clean,
            target_norm: 1.0,
        }
    }
}

fn two() -> usize {
    2
}
fn train_metric() -> MetricKind {
    MetricKind::Train
}
fn clean_target() -> TargetKind {
    TargetKind::Clean
}
fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub path: PathBuf,
    pub metrics: Vec<String>,
    #[serde(default)]
    pub log_y: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
    #[serde(default = "default_plots")]
    pub plots: Vec<PlotSpec>,
}

fn default_csv() -> PathBuf {
    PathBuf::from("sweep.csv")
}

fn default_plots() -> Vec<PlotSpec> {
    vec![PlotSpec {
        path: PathBuf::from("test_mse.svg"),
        metrics: vec!["test_mse_sgd".into(), "test_mse_minnorm".into()],
        log_y: false,
    }]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            csv: default_csv(),
            plots: default_plots(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() {
            return Err(invalid("m_grid must not be empty"));
        }
        if self.m_grid[0] == 0 {
            return Err(invalid("m_grid entries must be positive"));
        }
        if let Some(w) = self.m_grid.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "m_grid must be strictly increasing ({} is followed by {})",
                w[0], w[1]
            )));
        }
        if self.n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.schedules.is_empty() {
            return Err(invalid("at least one schedule is required"));
        }
        for (i, s) in self.schedules.iter().enumerate() {
            s.validate()
                .map_err(|e| invalid(format!("schedules[{i}]: {e}")))?;
        }
        match &self.data {
            DataSource::Synthetic {
                bandwidth,
                n_test,
                noise_sd,
                ..
            } => {
                if self.d.unwrap_or(0) == 0 {
                    return Err(invalid("synthetic data needs d >= 1"));
                }
                if bandwidth.is_some_and(|b| !(b > 0.0)) {
                    return Err(invalid("data.bandwidth must be > 0"));
                }
                if *n_test == 0 {
                    return Err(invalid("data.n_test must be >= 1"));
                }
                if !(*noise_sd >= 0.0) {
                    return Err(invalid("data.noise_sd must be >= 0"));
                }
            }
            DataSource::Idx {
                digits,
                pixel_scale,
                noise_sd,
                teacher_m,
                ..
            } => {
                if !self.n.is_multiple_of(2) {
                    return Err(invalid("IDX data needs an even n (n/2 images per digit)"));
                }
                if digits[0] == digits[1] || digits.iter().any(|&d| d > 9) {
                    return Err(invalid("data.digits must be two different digits in 0..=9"));
                }
                if !(*pixel_scale > 0.0) {
                    return Err(invalid("data.pixel_scale must be > 0"));
                }
                if !(*noise_sd >= 0.0) {
                    return Err(invalid("data.noise_sd must be >= 0"));
                }
                if *teacher_m == 0 {
                    return Err(invalid("data.teacher_m must be >= 1"));
                }
            }
        }
        if let Some(dc) = &self.decomposition {
            if dc.n_w == 0 || dc.n_noise == 0 || dc.n_order == 0 {
                return Err(invalid("decomposition counts must be >= 1"));
            }
            if !(dc.target_norm >= 0.0) {
                return Err(invalid("decomposition.target_norm must be >= 0"));
            }
        }
        for plot in &self.output.plots {
            for metric in &plot.metrics {
                super::metric_column(metric)?;
            }
        }
        Ok(())
    }

    /// Resolves relative IDX paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Idx { images, labels, .. } = &mut self.data {
            for p in [images, labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// Parses and validates a sweep spec from TOML text. Schema errors carry the
/// line, column and offending key.
pub fn parse_config_str(text: &str) -> Result<SweepSpec> {
    let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Reads, parses and validates a sweep config; IDX paths are resolved
/// relative to the file's directory.
pub fn parse_config(path: impl AsRef<Path>) -> Result<SweepSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spec =
        parse_config_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    spec.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(spec)
}
