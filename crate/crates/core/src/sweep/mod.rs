//! Config-driven sweeps over the number of random features, with CSV tables,
//! SVG line charts and a spectral diagnostics report.
//!
//! Every row is keyed by `(m, schedule index, repetition)`. Seeds are derived
//! from the config seed and that key, so [`run_cell`] reproduces any single row
//! of [`run_sweep`] exactly.

mod config;
mod spectra;
mod svg;
mod table;

pub use config::{
    parse_config, parse_config_str, DataSource, DecompositionSpec, IdxTarget, MetricKind,
    OutputSpec, PlotSpec, SweepSpec, SyntheticTarget, TargetKind,
};
pub use spectra::{spectra_report, write_spectra_csv, SpectraRow};
pub use svg::{compute_series, render_svg, svg_document, Series, SeriesPoint};
pub use table::{format_float, read_csv, write_csv, CSV_HEADER, CSV_SCHEMA_VERSION};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{
    gen_inputs, gen_target_laplace, load_idx_images, load_idx_labels, make_binary_digit_split,
    plant_teacher_labels, Dataset, IdxImages, Provenance,
};
use crate::decomposition::{
    estimate_terms, DecompositionConfig, DecompositionReport, McCounts, RiskMetric, TargetModel,
};
use crate::error::{Error, Result};
use crate::features::{ActivationKind, FeatureMap};
use crate::optimizer::{min_norm_fit, mse, sgd_average_features, SgdOptions, DEFAULT_SVD_TOL};
use crate::rng::{derive_seed, normal_vec, rng_from_seed};

const DATA_STREAM: u64 = 1;
const FEATURE_STREAM: u64 = 2;
const ROW_STREAM: u64 = 3;
const DECOMP_FEATURE_STREAM: u64 = 4;

/// Metric columns that can be plotted, in CSV order.
pub const METRICS: [&str; 13] = [
    "test_mse_sgd",
    "test_mse_minnorm",
    "train_mse_minnorm",
    "B1",
    "B2",
    "B3",
    "V1",
    "V2",
    "V3",
    "bias",
    "variance",
    "excess",
    "additivity_gap",
];

/// One `(m, schedule, repetition)` cell. Missing values are `None`; the
/// reason is recorded in `status`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `m / n` with `m` the number of rows of `W`.
    pub ratio: f64,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub zeta: f64,
    pub gamma0: f64,
    pub seed: u64,
    pub test_mse_sgd: Option<f64>,
    pub test_mse_minnorm: Option<f64>,
    pub train_mse_minnorm: Option<f64>,
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub b3: Option<f64>,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub v3: Option<f64>,
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub excess: Option<f64>,
    pub stability_warning: bool,
    pub additivity_gap: Option<f64>,
    /// Feature dimension (`2m` for CosSin).
    pub p: usize,
    pub n_test: usize,
    pub schedule: usize,
    pub rep: usize,
    /// `ok`, or `;`-separated failure notes.
    pub status: String,
}

impl SweepRow {
    pub fn metric(&self, name: &str) -> Result<Option<f64>> {
        Ok(match metric_column(name)? {
            0 => self.test_mse_sgd,
            1 => self.test_mse_minnorm,
            2 => self.train_mse_minnorm,
            3 => self.b1,
            4 => self.b2,
            5 => self.b3,
            6 => self.v1,
            7 => self.v2,
            8 => self.v3,
            9 => self.bias,
            10 => self.variance,
            11 => self.excess,
            _ => self.additivity_gap,
        })
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Index of `name` in [`METRICS`].
pub fn metric_column(name: &str) -> Result<usize> {
    METRICS
        .iter()
        .position(|&m| m == name)
        .ok_or_else(|| Error::UnknownMetric(name.to_string()))
}

/// Training set plus held-out evaluation data for one repetition.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub x_test: DMatrix<f64>,
    pub y_test: Vec<f64>,
}

enum Source {
    Synthetic,
    Idx(IdxImages, Vec<u8>),
}

fn load_source(spec: &SweepSpec) -> Result<Source> {
    match &spec.data {
        DataSource::Synthetic { .. } => Ok(Source::Synthetic),
        DataSource::Idx { images, labels, .. } => {
            let images = load_idx_images(images)?;
            let labels = load_idx_labels(labels)?;
            if let Some(d) = spec.d {
                if d != images.pixels_per_image() {
                    return Err(Error::Config(format!(
                        "d = {d} but the IDX images have {} pixels",
                        images.pixels_per_image()
                    )));
                }
            }
            Ok(Source::Idx(images, labels))
        }
    }
}

fn prepare(spec: &SweepSpec, source: &Source, rep: usize) -> Result<PreparedData> {
    let seed = derive_seed(spec.seed, &[DATA_STREAM, rep as u64]);
    match (&spec.data, source) {
        (
            DataSource::Synthetic {
                cov,
                target,
                bandwidth,
                n_test,
                noise_sd,
            },
            _,
        ) => {
            let d = spec.d.unwrap_or(0);
            let x = gen_inputs(derive_seed(seed, &[1]), spec.n, d, cov)?;
            let x_test = gen_inputs(derive_seed(seed, &[2]), *n_test, d, cov)?;
            let noise = |stream: u64, len: usize| {
                normal_vec(
                    &mut rng_from_seed(derive_seed(seed, &[stream])),
                    len,
                    *noise_sd,
                )
            };
            let (f_train, f_test, provenance) = match target {
                SyntheticTarget::Laplace => {
                    let bw = bandwidth.unwrap_or((d as f64).sqrt());
                    let t = gen_target_laplace(derive_seed(seed, &[3]), &x, &x_test, bw, 0.0)?;
                    (t.fstar_train, t.fstar_eval, Provenance::SyntheticLaplace)
                }
                SyntheticTarget::Linear => {
                    let beta = DVector::from_vec(normal_vec(
                        &mut rng_from_seed(derive_seed(seed, &[3])),
                        d,
                        1.0 / (d as f64).sqrt(),
                    ));
                    let f = |x: &DMatrix<f64>| (x * &beta).iter().copied().collect::<Vec<f64>>();
                    (f(&x), f(&x_test), Provenance::SyntheticLinear)
                }
            };
            let add =
                |f: &[f64], e: Vec<f64>| f.iter().zip(e).map(|(f, e)| f + e).collect::<Vec<f64>>();
            let y = add(&f_train, noise(4, spec.n));
            let y_test = add(&f_test, noise(5, *n_test));
            let train = Dataset::new(x, y, Some(f_train), *noise_sd, provenance)?;
            Ok(PreparedData {
                train,
                x_test,
                y_test,
            })
        }
        (
            DataSource::Idx {
                digits,
                pixel_scale,
                noise_sd,
                target,
                teacher_m,
                ..
            },
            Source::Idx(images, labels),
        ) => {
            let mut split = make_binary_digit_split(
                images,
                labels,
                digits[0],
                digits[1],
                spec.n / 2,
                derive_seed(seed, &[1]),
                *noise_sd,
                *pixel_scale,
            )?;
            if *target == IdxTarget::Planted {
                let teacher = FeatureMap::new(
                    derive_seed(seed, &[2]),
                    *teacher_m,
                    images.pixels_per_image(),
                    ActivationKind::CosSin,
                )?;
                split = plant_teacher_labels(&split, &teacher, derive_seed(seed, &[3]), *noise_sd)?;
            }
            Ok(PreparedData {
                x_test: split.test.x,
                y_test: split.test.y,
                train: split.train,
            })
        }
        (DataSource::Idx { .. }, Source::Synthetic) => {
            unreachable!("source loaded from the same spec")
        }
    }
}

/// Builds the training and evaluation data of repetition `rep`.
pub fn prepare_data(spec: &SweepSpec, rep: usize) -> Result<PreparedData> {
    prepare(spec, &load_source(spec)?, rep)
}

fn feature_seed(spec: &SweepSpec, m: usize, rep: usize) -> u64 {
    derive_seed(spec.seed, &[FEATURE_STREAM, m as u64, rep as u64])
}

/// Seed of the row `(m, schedule, rep)`; drives SGD initialization, epoch
/// reshuffles and the decomposition.
pub fn row_seed(spec: &SweepSpec, m: usize, schedule: usize, rep: usize) -> u64 {
    derive_seed(
        spec.seed,
        &[ROW_STREAM, m as u64, schedule as u64, rep as u64],
    )
}

fn decomposition_config(
    spec: &SweepSpec,
    dc: &DecompositionSpec,
    data: &PreparedData,
    schedule: usize,
    seed: u64,
) -> Result<DecompositionConfig> {
    Ok(DecompositionConfig {
        schedule: spec.schedules[schedule],
        mc: McCounts::new(dc.n_w, dc.n_noise, dc.n_order)?,
        metric: match dc.metric {
            MetricKind::Train => RiskMetric::TrainSample,
            MetricKind::HeldOut => RiskMetric::HeldOut(data.x_test.clone()),
        },
        target: match dc.target {
            TargetKind::Clean => TargetModel::CleanTargets,
            TargetKind::Planted => TargetModel::Planted {
                target_norm: dc.target_norm,
            },
        },
        seed,
    })
}

fn decompose(
    spec: &SweepSpec,
    dc: &DecompositionSpec,
    data: &PreparedData,
    m: usize,
    schedule: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    let config = decomposition_config(spec, dc, data, schedule, seed)?;
    let d = data.train.d();
    let activation = spec.activation;
    estimate_terms(
        &data.train,
        |w| {
            FeatureMap::new(
                derive_seed(seed, &[DECOMP_FEATURE_STREAM, w as u64]),
                m,
                d,
                activation,
            )
        },
        &config,
    )
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn keep<T>(status: &mut Vec<String>, what: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            status.push(format!("{what}: {e}"));
            None
        }
    }
}

fn blank_row(spec: &SweepSpec, m: usize, schedule: usize, rep: usize) -> SweepRow {
    let s = spec.schedules[schedule];
    SweepRow {
        ratio: m as f64 / spec.n as f64,
        m,
        n: spec.n,
        d: spec.d.unwrap_or(0),
        zeta: s.zeta,
        gamma0: s.gamma0,
        seed: row_seed(spec, m, schedule, rep),
        test_mse_sgd: None,
        test_mse_minnorm: None,
        train_mse_minnorm: None,
        b1: None,
        b2: None,
        b3: None,
        v1: None,
        v2: None,
        v3: None,
        bias: None,
        variance: None,
        excess: None,
        stability_warning: false,
        additivity_gap: None,
        p: m * spec.activation.output_multiplicity(),
        n_test: 0,
        schedule,
        rep,
        status: "ok".into(),
    }
}

/// Rows for one `(m, rep)` pair and the listed schedules. The feature map and
/// minimum-norm fit are shared across schedules.
fn pair_rows(
    spec: &SweepSpec,
    data: &PreparedData,
    m: usize,
    schedules: &[usize],
    rep: usize,
) -> Vec<SweepRow> {
    let d = data.train.d();
    let mut common = Vec::new();
    let features = keep(
        &mut common,
        "features",
        FeatureMap::new(feature_seed(spec, m, rep), m, d, spec.activation).and_then(|map| {
            Ok((
                map.apply_batch(&data.train.x)?,
                map.apply_batch(&data.x_test)?,
            ))
        }),
    );
    let y = &data.train.y;
    let min_norm = features.as_ref().and_then(|(phi, phi_test)| {
        let fit = keep(
            &mut common,
            "min-norm",
            min_norm_fit(phi, y, DEFAULT_SVD_TOL),
        )?;
        let train = keep(&mut common, "min-norm", mse(phi, &fit, y));
        let test = keep(&mut common, "min-norm", mse(phi_test, &fit, &data.y_test));
        Some((train.and_then(finite), test.and_then(finite)))
    });

    schedules
        .iter()
        .map(|&s| {
            let mut row = blank_row(spec, m, s, rep);
            row.d = d;
            row.n_test = data.y_test.len();
            let mut status = common.clone();
            if let Some((train, test)) = min_norm {
                row.train_mse_minnorm = train;
                row.test_mse_minnorm = test;
            }
            if let Some((phi, phi_test)) = &features {
                let opts = SgdOptions {
                    epochs: spec.epochs,
                    seed: row.seed,
                    record_trajectory: false,
                };
                let run = sgd_average_features(phi, y, &spec.schedules[s], spec.init, &opts);
                match run {
                    Ok(out) => {
                        row.stability_warning = out.stability_warning;
                        row.test_mse_sgd = keep(
                            &mut status,
                            "sgd",
                            mse(phi_test, &out.theta_bar, &data.y_test),
                        )
                        .and_then(finite);
                        if row.test_mse_sgd.is_none() && status.is_empty() {
                            status.push("sgd: non-finite test error".into());
                        }
                    }
                    Err(e) => {
                        row.stability_warning = matches!(e, Error::Diverged { .. });
                        status.push(format!("sgd: {e}"));
                    }
                }
            }
            if let Some(dc) = &spec.decomposition {
                if let Some(r) = keep(
                    &mut status,
                    "decomposition",
                    decompose(spec, dc, data, m, s, row.seed),
                ) {
                    row.b1 = finite(r.b1.mean);
                    row.b2 = finite(r.b2.mean);
                    row.b3 = finite(r.b3.mean);
                    row.v1 = finite(r.v1.mean);
                    row.v2 = finite(r.v2.mean);
                    row.v3 = finite(r.v3.mean);
                    row.bias = finite(r.bias.mean);
                    row.variance = finite(r.variance.mean);
                    row.excess = finite(r.excess.mean);
                    row.additivity_gap = finite(r.additivity_gap.mean);
                    row.stability_warning |= r.stability_warning;
                }
            }
            if !status.is_empty() {
                row.status = status.join("; ");
            }
            row
        })
        .collect()
}

fn thread_pool(parallelism: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

/// Runs every `(m, schedule, repetition)` cell. Cell failures are recorded in
/// the row status; only an invalid spec or unreadable input files abort.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let source = load_source(spec)?;
    let pool = thread_pool(spec.parallelism)?;
    let all_schedules: Vec<usize> = (0..spec.schedules.len()).collect();
    pool.install(|| {
        let data: Vec<Result<PreparedData>> = (0..spec.repetitions)
            .into_par_iter()
            .map(|r| prepare(spec, &source, r))
            .collect();
        let pairs: Vec<(usize, usize)> = spec
            .m_grid
            .iter()
            .flat_map(|&m| (0..spec.repetitions).map(move |r| (m, r)))
            .collect();
        let mut rows: Vec<SweepRow> = pairs
            .par_iter()
            .flat_map_iter(|&(m, r)| match &data[r] {
                Ok(prepared) => pair_rows(spec, prepared, m, &all_schedules, r),
                Err(e) => all_schedules
                    .iter()
                    .map(|&s| SweepRow {
                        status: format!("data: {e}"),
                        ..blank_row(spec, m, s, r)
                    })
                    .collect(),
            })
            .collect();
        rows.sort_by_key(|r| (r.m, r.schedule, r.rep));
        Ok(rows)
    })
}

/// Recomputes the single row `(m, schedule, rep)` of [`run_sweep`].
pub fn run_cell(spec: &SweepSpec, m: usize, schedule: usize, rep: usize) -> Result<SweepRow> {
    spec.validate()?;
    if m == 0 || schedule >= spec.schedules.len() || rep >= spec.repetitions {
        return Err(Error::invalid(format!(
            "cell (m = {m}, schedule = {schedule}, rep = {rep}) is outside the config"
        )));
    }
    let data = prepare_data(spec, rep)?;
    let pool = thread_pool(spec.parallelism)?;
    Ok(pool.install(|| pair_rows(spec, &data, m, &[schedule], rep).remove(0)))
}

/// Full decomposition report for one cell, using the configured decomposition
/// settings or the defaults.
pub fn decompose_cell(
    spec: &SweepSpec,
    m: usize,
    schedule: usize,
    rep: usize,
) -> Result<DecompositionReport> {
    spec.validate()?;
    if schedule >= spec.schedules.len() {
        return Err(Error::invalid(format!(
            "schedule index {schedule} is outside the config"
        )));
    }
    let data = prepare_data(spec, rep)?;
    let dc = spec.decomposition.clone().unwrap_or_default();
    let pool = thread_pool(spec.parallelism)?;
    pool.install(|| {
        decompose(
            spec,
            &dc,
            &data,
            m,
            schedule,
            row_seed(spec, m, schedule, rep),
        )
    })
}

/// Files written by [`sweep_to_dir`].
#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub rows: Vec<SweepRow>,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Output paths are taken relative to `out_dir` unless absolute.
pub fn output_path(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

/// Runs the sweep and writes the CSV and every configured plot.
fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

pub fn sweep_to_dir(spec: &SweepSpec, out_dir: &Path) -> Result<SweepArtifacts> {
    let rows = run_sweep(spec)?;
    let csv = output_path(out_dir, &spec.output.csv);
    create_parent(&csv)?;
    write_csv(&rows, &csv)?;
    let mut plots = Vec::new();
    for plot in &spec.output.plots {
        let path = output_path(out_dir, &plot.path);
        create_parent(&path)?;
        render_svg(&rows, &plot.metrics, &path, plot.log_y)?;
        plots.push(path);
    }
    Ok(SweepArtifacts { rows, csv, plots })
}
