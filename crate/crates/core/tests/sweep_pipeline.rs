use std::fs;
use std::path::Path;

use rfsgd::data::{load_idx_images, load_idx_labels, synthetic_digits};
use rfsgd::sweep::{
    parse_config, read_csv, run_cell, run_sweep, sweep_to_dir, write_csv, CSV_HEADER,
};

const FIXTURE_SEED: u64 = 37;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn bundled_fixture_matches_generator() {
    let images = load_idx_images(fixture("digits-images-idx3-ubyte")).unwrap();
    let labels = load_idx_labels(fixture("digits-labels-idx1-ubyte")).unwrap();
    assert_eq!((images.n, images.rows, images.cols), (1000, 28, 28));
    assert_eq!(labels.iter().filter(|&&l| l == 3).count(), 500);
    assert_eq!(labels.iter().filter(|&&l| l == 7).count(), 500);
    let regen = synthetic_digits(FIXTURE_SEED, 500, &[3, 7]);
    assert_eq!(regen.images, images);
    assert_eq!(regen.labels, labels);
}

const CONFIG: &str = r#"
seed = 21
activation = "cossin"
m_grid = [25, 50, 100, 200]
n = 100
repetitions = 2
schedules = [{ gamma0 = 1.0, zeta = 0.5 }, { gamma0 = 0.5, zeta = 0.0 }]
init = { kind = "near_min_norm", value = 1.0 }

[data]
kind = "idx"
images = "fixtures/digits-images-idx3-ubyte"
labels = "fixtures/digits-labels-idx1-ubyte"
target = "planted"
noise_sd = 0.5

[decomposition]
n_noise = 2
target = "planted"

[output]
csv = "table.csv"

[[output.plots]]
path = "mse.svg"
metrics = ["test_mse_sgd", "test_mse_minnorm"]
log_y = true

[[output.plots]]
path = "variance.svg"
metrics = ["V1", "V2", "V3"]
"#;

#[test]
fn config_to_artifacts_is_deterministic() {
    let tests_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    let text = CONFIG.replace(
        "\"fixtures/",
        &format!("\"{}/fixtures/", tests_dir.display()),
    );
    fs::write(&cfg, text).unwrap();
    let spec = parse_config(&cfg).unwrap();

    let a = sweep_to_dir(&spec, &dir.path().join("a")).unwrap();
    let b = sweep_to_dir(&spec, &dir.path().join("b")).unwrap();
    assert_eq!(a.rows.len(), 4 * 2 * 2);
    assert!(
        a.rows.iter().all(|r| r.is_ok()),
        "{:?}",
        a.rows.iter().find(|r| !r.is_ok())
    );
    assert_eq!(fs::read(&a.csv).unwrap(), fs::read(&b.csv).unwrap());
    for (pa, pb) in a.plots.iter().zip(&b.plots) {
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
    }
    let text = fs::read_to_string(&a.csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(read_csv(&a.csv).unwrap(), a.rows);

    for r in &a.rows {
        assert_eq!(r.ratio, r.m as f64 / 100.0);
        assert_eq!((r.p, r.n, r.d, r.n_test), (2 * r.m, 100, 784, 900));
        assert!(r.variance.unwrap() >= 0.0 && r.bias.unwrap() >= 0.0);
        if r.p >= r.n {
            assert!(r.train_mse_minnorm.unwrap() <= 1e-10);
        }
    }

    // Any cell regenerates alone.
    for (m, s, rep) in [(25, 0, 0), (100, 1, 1), (200, 0, 1)] {
        let row = run_cell(&spec, m, s, rep).unwrap();
        let want = a
            .rows
            .iter()
            .find(|r| (r.m, r.schedule, r.rep) == (m, s, rep))
            .unwrap();
        assert_eq!(&row, want);
    }
    let mut seeded = spec.clone();
    seeded.seed += 1;
    assert_ne!(
        run_sweep(&seeded).unwrap()[0].test_mse_sgd,
        a.rows[0].test_mse_sgd
    );
}

#[test]
fn subset_grid_reproduces_rows() {
    let tests_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        CONFIG.replace(
            "\"fixtures/",
            &format!("\"{}/fixtures/", tests_dir.display()),
        ),
    )
    .unwrap();
    let mut spec = parse_config(&cfg).unwrap();
    spec.decomposition = None;
    let full = run_sweep(&spec).unwrap();
    spec.m_grid = vec![50, 200];
    spec.parallelism = Some(1);
    let part = run_sweep(&spec).unwrap();
    for r in &part {
        assert!(full.contains(r));
    }
    let out = dir.path().join("part.csv");
    write_csv(&part, &out).unwrap();
    assert_eq!(read_csv(&out).unwrap(), part);
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let spec = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if let rfsgd::sweep::DataSource::Idx { images, .. } = &spec.data {
            assert!(images.exists(), "{}", images.display());
        }
        seen += 1;
    }
    assert_eq!(seen, 2);
}
