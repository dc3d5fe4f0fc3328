//! Per-instance interval results as a comma-separated table.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::interval::{IntervalEstimate, Method};
use crate::scalar::Scalar;

pub const RESULTS_HEADER: [&str; 9] = ["id", "r_hat", "lower", "upper", "width", "method", "alpha", "delta", "degenerate"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow<T> {
    pub id: String,
    pub interval: IntervalEstimate<T>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Writes rows stable-sorted by id.
pub fn write_results<T: Scalar, W: Write>(out: W, rows: &[ResultRow<T>]) -> Result<()> {
    let mut sorted: Vec<&ResultRow<T>> = rows.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in sorted {
        let iv = &r.interval;
        w.write_record([
            r.id.clone(),
            iv.r_hat.to_string(),
            iv.lower.to_string(),
            iv.upper.to_string(),
            iv.width().to_string(),
            iv.method.to_string(),
            iv.alpha.to_string(),
            iv.delta.to_string(),
            iv.degenerate.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<T: Scalar, R: Read>(input: R) -> Result<Vec<ResultRow<T>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::Format(format!("unexpected results header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::Format(format!("results row {}: bad {what}", line + 2));
        let num = |i: usize, what: &str| -> Result<T> {
            rec[i].parse::<f64>().ok().and_then(T::from_f64).ok_or_else(|| bad(what))
        };
        let method: Method = rec[5].parse().map_err(|_| bad("method"))?;
        let interval = IntervalEstimate {
            r_hat: num(1, "r_hat")?,
            lower: num(2, "lower")?,
            upper: num(3, "upper")?,
            method,
            alpha: num(6, "alpha")?,
            delta: num(7, "delta")?,
            degenerate: rec[8].parse().map_err(|_| bad("degenerate"))?,
        };
        if !(T::zero() <= interval.lower && interval.lower <= interval.r_hat && interval.r_hat <= interval.upper && interval.upper <= T::one()) {
            return Err(bad("bounds"));
        }
        rows.push(ResultRow { id: rec[0].to_string(), interval });
    }
    Ok(rows)
}

pub fn save_results<T: Scalar>(path: &Path, rows: &[ResultRow<T>]) -> Result<()> {
    write_results(File::create(path)?, rows)
}

pub fn load_results<T: Scalar>(path: &Path) -> Result<Vec<ResultRow<T>>> {
    read_results(File::open(path)?)
}
