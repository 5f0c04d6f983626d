//! Self-contained SVG line charts of sweep metrics against `m / n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{metric_column, SweepRow};
use crate::decomposition::stats::sample_sd;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub ratio: f64,
    pub mean: f64,
    /// Sample standard deviation over repetitions; 0 for a single value.
    pub sd: f64,
    /// Repetitions with a value.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub metric: String,
    pub schedule: usize,
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

/// Mean and spread of `metric` per ratio, one series per schedule. Missing
/// values are skipped; ratios with no values are left out.
pub fn compute_series(rows: &[SweepRow], metric: &str) -> Result<Vec<Series>> {
    metric_column(metric)?;
    let mut groups: BTreeMap<usize, BTreeMap<usize, (f64, Vec<f64>)>> = BTreeMap::new();
    let mut schedules: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for r in rows {
        schedules.insert(r.schedule, (r.gamma0, r.zeta));
        let cell = groups
            .entry(r.schedule)
            .or_default()
            .entry(r.m)
            .or_insert((r.ratio, Vec::new()));
        if let Some(v) = r.metric(metric)? {
            cell.1.push(v);
        }
    }
    let many = schedules.len() > 1;
    Ok(groups
        .into_iter()
        .map(|(schedule, cells)| {
            let (gamma0, zeta) = schedules[&schedule];
            let points = cells
                .into_values()
                .filter(|(_, vs)| !vs.is_empty())
                .map(|(ratio, vs)| SeriesPoint {
                    ratio,
                    mean: vs.iter().sum::<f64>() / vs.len() as f64,
                    sd: sample_sd(&vs),
                    count: vs.len(),
                })
                .collect();
            let label = if many {
                format!("{metric} (gamma0 = {gamma0}, zeta = {zeta})")
            } else {
                metric.to_string()
            };
            Series {
                metric: metric.to_string(),
                schedule,
                label,
                points,
            }
        })
        .collect())
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn t(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }
}

/// The chart as an SVG document string.
pub fn svg_document<S: AsRef<str>>(
    rows: &[SweepRow],
    metrics: &[S],
    log_y: bool,
) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot plot an empty sweep"));
    }
    if metrics.is_empty() {
        return Err(Error::invalid("no metrics to plot"));
    }
    let mut series = Vec::new();
    for m in metrics {
        series.extend(compute_series(rows, m.as_ref())?);
    }

    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|r| *r > 0.0).collect();
    let (mut xlo, mut xhi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.log10()), b.max(r.log10()))
        });
    if xhi - xlo < 1e-9 {
        xlo -= 0.3;
        xhi += 0.3;
    } else {
        let pad = 0.05 * (xhi - xlo);
        xlo -= pad;
        xhi += pad;
    }
    let x_axis = Axis {
        lo: xlo,
        hi: xhi,
        log: true,
    };

    let pts = series.iter().flat_map(|s| &s.points);
    let mut values: Vec<f64> = pts
        .flat_map(|p| [p.mean - p.sd, p.mean + p.sd, p.mean])
        .collect();
    if log_y {
        values.retain(|v| *v > 0.0);
    }
    let (mut ylo, mut yhi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !ylo.is_finite() {
        (ylo, yhi) = if log_y { (0.1, 10.0) } else { (0.0, 1.0) };
    }
    let y_floor = ylo;
    let y_axis = if log_y {
        let (lo, hi) = (ylo.log10().floor(), yhi.log10().ceil());
        Axis {
            lo,
            hi: if hi > lo { hi } else { lo + 1.0 },
            log: true,
        }
    } else {
        if yhi - ylo < 1e-12 * yhi.abs().max(1.0) {
            ylo -= 0.5 * ylo.abs().max(1.0);
            yhi += 0.5 * yhi.abs().max(1.0);
        }
        let step = nice_step(yhi - ylo);
        Axis {
            lo: (ylo / step).floor() * step,
            hi: (yhi / step).ceil() * step,
            log: false,
        }
    };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |r: f64| LEFT + x_axis.t(r) * pw;
    let py = |v: f64| TOP + (1.0 - y_axis.t(v)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );

    let mut xticks: Vec<f64> = ratios.clone();
    xticks.sort_by(f64::total_cmp);
    xticks.dedup();
    for r in &xticks {
        let x = px(*r);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#ddd"/><text x="{x:.2}" y="{ty:.2}" text-anchor="middle">{label}</text>"##,
            y0 = TOP,
            y1 = TOP + ph,
            ty = TOP + ph + 16.0,
            label = tick_label(*r)
        );
    }
    let yticks: Vec<f64> = if y_axis.log {
        (y_axis.lo as i32..=y_axis.hi as i32)
            .map(|k| 10f64.powi(k))
            .collect()
    } else {
        let step = nice_step(y_axis.hi - y_axis.lo);
        let k = ((y_axis.hi - y_axis.lo) / step).round() as i64;
        (0..=k).map(|i| y_axis.lo + i as f64 * step).collect()
    };
    for v in yticks {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{label}</text>"##,
            x0 = LEFT,
            x1 = LEFT + pw,
            tx = LEFT - 6.0,
            ty = y + 4.0,
            label = tick_label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">m / n</text>"#,
        x = LEFT + pw / 2.0,
        y = HEIGHT - 14.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let visible: Vec<&SeriesPoint> = ser
            .points
            .iter()
            .filter(|p| !log_y || p.mean > 0.0)
            .collect();
        if visible.len() > 1 || visible.first().is_some_and(|p| p.sd > 0.0) {
            let clamp = |v: f64| if log_y { v.max(y_floor) } else { v };
            let upper = visible
                .iter()
                .map(|p| format!("{:.2},{:.2}", px(p.ratio), py(p.mean + p.sd)));
            let lower = visible
                .iter()
                .rev()
                .map(|p| format!("{:.2},{:.2}", px(p.ratio), py(clamp(p.mean - p.sd))));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let line: Vec<String> = visible
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.ratio), py(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for p in &visible {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(p.ratio),
                py(p.mean)
            );
        }
        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes mean with a one-standard-deviation band for each metric.
pub fn render_svg<S: AsRef<str>>(
    rows: &[SweepRow],
    metrics: &[S],
    path: impl AsRef<Path>,
    log_y: bool,
) -> Result<()> {
    let doc = svg_document(rows, metrics, log_y)?;
    let path = path.as_ref();
    fs::write(path, doc).map_err(|e| Error::io(path, e))
}
