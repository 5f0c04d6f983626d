//! Synthetic handwritten-digit images in the 28x28 IDX layout.
//!
//! Each digit is a fixed set of pen strokes in the unit square. Every sample
//! applies a random affine distortion, jitters the control points and varies
//! the stroke width, then rasterizes with one pixel of anti-aliasing on a black
//! background. The result is sparse, stroke-like data whose pixel statistics
//! are close to real scanned digits.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::idx::{write_idx_images, write_idx_labels, IdxImages};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, standard_normal, Rng};

pub const SIDE: usize = 28;

pub const IMAGE_FILE: &str = "digits-images-idx3-ubyte";
pub const LABEL_FILE: &str = "digits-labels-idx1-ubyte";

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = (((to_deg - from_deg).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|k| {
            let t = (from_deg + (to_deg - from_deg) * k as f64 / steps as f64) * PI / 180.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn template(digit: u8) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.2, 0.31, 0.0, 360.0)],
        1 => vec![vec![(0.4, 0.3), (0.52, 0.18), (0.52, 0.82)]],
        2 => {
            let mut s = arc(0.5, 0.36, 0.18, 0.17, -165.0, 30.0);
            s.extend([(0.3, 0.82), (0.72, 0.82)]);
            vec![s]
        }
        3 => vec![
            arc(0.48, 0.34, 0.16, 0.15, -150.0, 90.0),
            arc(0.48, 0.66, 0.18, 0.17, -90.0, 150.0),
        ],
        4 => vec![vec![(0.62, 0.82), (0.62, 0.18), (0.28, 0.62), (0.76, 0.62)]],
        5 => {
            let mut s = vec![(0.7, 0.18), (0.36, 0.18), (0.34, 0.47)];
            s.extend(arc(0.5, 0.63, 0.19, 0.18, -125.0, 150.0));
            vec![s]
        }
        6 => vec![
            vec![(0.66, 0.19), (0.44, 0.32), (0.33, 0.6)],
            arc(0.5, 0.65, 0.17, 0.16, 0.0, 360.0),
        ],
        7 => vec![vec![(0.28, 0.2), (0.72, 0.2), (0.44, 0.82)]],
        8 => vec![
            arc(0.5, 0.33, 0.14, 0.14, 0.0, 360.0),
            arc(0.5, 0.66, 0.17, 0.17, 0.0, 360.0),
        ],
        9 => vec![
            arc(0.5, 0.36, 0.16, 0.16, 0.0, 360.0),
            vec![(0.66, 0.36), (0.6, 0.82)],
        ],
        _ => unreachable!("digits are validated by the caller"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn distort(strokes: &mut [Stroke], rng: &mut Rng) {
    let angle = rng.random_range(-0.2..0.2);
    let shear = rng.random_range(-0.2..0.2);
    let sx = rng.random_range(0.8..1.1);
    let sy = rng.random_range(0.85..1.1);
    let tx = rng.random_range(-0.06..0.06);
    let ty = rng.random_range(-0.05..0.05);
    let (s, c) = f64::sin_cos(angle);
    for stroke in strokes.iter_mut() {
        for p in stroke.iter_mut() {
            let (x, y) = (
                p.0 - 0.5 + 0.015 * standard_normal(rng),
                p.1 - 0.5 + 0.015 * standard_normal(rng),
            );
            let (x, y) = (sx * (x + shear * y), sy * y);
            *p = (c * x - s * y + 0.5 + tx, s * x + c * y + 0.5 + ty);
        }
    }
}

/// Renders one 28x28 image of `digit` (row-major bytes).
pub fn render_digit(digit: u8, seed: u64) -> Result<Vec<u8>> {
    if digit > 9 {
        return Err(Error::invalid(format!("digit must be 0..=9 (got {digit})")));
    }
    let mut rng = rng_from_seed(seed);
    let mut strokes = template(digit);
    distort(&mut strokes, &mut rng);
    let width = rng.random_range(0.03..0.055);
    let px = 1.0 / SIDE as f64;
    let mut out = vec![0u8; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let p = ((c as f64 + 0.5) * px, (r as f64 + 0.5) * px);
            let d = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = ((width + 0.5 * px - d) / px).clamp(0.0, 1.0);
            out[r * SIDE + c] = (255.0 * v).round() as u8;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitFixture {
    pub images: IdxImages,
    pub labels: Vec<u8>,
}

/// `n_per_digit` images of each listed digit, interleaved round-robin.
pub fn synthetic_digits(seed: u64, n_per_digit: usize, digits: &[u8]) -> DigitFixture {
    let mut pixels = Vec::with_capacity(n_per_digit * digits.len() * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n_per_digit * digits.len());
    for i in 0..n_per_digit {
        for &digit in digits {
            let img = render_digit(digit, derive_seed(seed, &[u64::from(digit), i as u64]))
                .expect("digits 0..=9");
            pixels.extend_from_slice(&img);
            labels.push(digit);
        }
    }
    DigitFixture {
        images: IdxImages {
            n: labels.len(),
            rows: SIDE,
            cols: SIDE,
            pixels,
        },
        labels,
    }
}

/// Writes a fixture into `dir` and returns the image and label paths.
pub fn write_digit_fixture(
    dir: impl AsRef<Path>,
    seed: u64,
    n_per_digit: usize,
    digits: &[u8],
) -> Result<(PathBuf, PathBuf)> {
    if let Some(&bad) = digits.iter().find(|&&d| d > 9) {
        return Err(Error::invalid(format!("digit must be 0..=9 (got {bad})")));
    }
    let fx = synthetic_digits(seed, n_per_digit, digits);
    let dir = dir.as_ref();
    let images = dir.join(IMAGE_FILE);
    let labels = dir.join(LABEL_FILE);
    write_idx_images(&images, &fx.images)?;
    write_idx_labels(&labels, &fx.labels)?;
    Ok((images, labels))
}
