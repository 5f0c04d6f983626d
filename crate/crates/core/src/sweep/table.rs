//! CSV serialization of sweep rows.

use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use super::SweepRow;
use crate::error::{Error, Result};

/// Bumped whenever [`CSV_HEADER`] changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 26] = [
    "ratio",
    "m",
    "n",
    "d",
    "zeta",
    "gamma0",
    "seed",
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
    "stability_warning",
    "additivity_gap",
    "p",
    "n_test",
    "schedule",
    "rep",
    "status",
];

/// Shortest text that parses back to the same `f64`; exponent notation
/// outside `[1e-5, 1e16)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn record(r: &SweepRow) -> Vec<String> {
    vec![
        format_float(r.ratio),
        r.m.to_string(),
        r.n.to_string(),
        r.d.to_string(),
        format_float(r.zeta),
        format_float(r.gamma0),
        r.seed.to_string(),
        opt(r.test_mse_sgd),
        opt(r.test_mse_minnorm),
        opt(r.train_mse_minnorm),
        opt(r.b1),
        opt(r.b2),
        opt(r.b3),
        opt(r.v1),
        opt(r.v2),
        opt(r.v3),
        opt(r.bias),
        opt(r.variance),
        opt(r.excess),
        r.stability_warning.to_string(),
        opt(r.additivity_gap),
        r.p.to_string(),
        r.n_test.to_string(),
        r.schedule.to_string(),
        r.rep.to_string(),
        r.status.clone(),
    ]
}

/// Writes the header and one record per row. Parent directories must exist.
pub fn write_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(record(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    line: u64,
    path: &'a Path,
}

impl Fields<'_> {
    fn raw(&self, i: usize) -> &str {
        self.rec.get(i).unwrap_or("")
    }

    fn err(&self, i: usize, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!(
            "{}: line {}, column `{}`: {msg}",
            self.path.display(),
            self.line,
            CSV_HEADER[i]
        ))
    }

    fn parse<T: FromStr>(&self, i: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(i).parse().map_err(|e| self.err(i, e))
    }

    fn opt(&self, i: usize) -> Result<Option<f64>> {
        if self.raw(i).is_empty() {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }
}

/// Reads a CSV written by [`write_csv`]; the header must match exactly.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: header does not match sweep CSV schema v{CSV_SCHEMA_VERSION}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = Fields {
            line: rec.position().map_or(0, |p| p.line()),
            rec: &rec,
            path,
        };
        rows.push(SweepRow {
            ratio: f.parse(0)?,
            m: f.parse(1)?,
            n: f.parse(2)?,
            d: f.parse(3)?,
            zeta: f.parse(4)?,
            gamma0: f.parse(5)?,
            seed: f.parse(6)?,
            test_mse_sgd: f.opt(7)?,
            test_mse_minnorm: f.opt(8)?,
            train_mse_minnorm: f.opt(9)?,
            b1: f.opt(10)?,
            b2: f.opt(11)?,
            b3: f.opt(12)?,
            v1: f.opt(13)?,
            v2: f.opt(14)?,
            v3: f.opt(15)?,
            bias: f.opt(16)?,
            variance: f.opt(17)?,
            excess: f.opt(18)?,
            stability_warning: f.parse(19)?,
            additivity_gap: f.opt(20)?,
            p: f.parse(21)?,
            n_test: f.parse(22)?,
            schedule: f.parse(23)?,
            rep: f.parse(24)?,
            status: f.raw(25).to_string(),
        });
    }
    Ok(rows)
}
