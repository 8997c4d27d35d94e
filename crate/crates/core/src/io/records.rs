//! Window records and sweep tables as comma-separated text.
//!
//! Reals are written with four decimals and missing values as empty
//! fields, so a written file reads back to the same text.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::SweepRow;
use crate::fusion::WindowRecord;

pub const RECORD_HEADER: [&str; 9] = [
    "window_index",
    "start_s",
    "rr_left",
    "rr_right",
    "rr_fused",
    "discrepancy",
    "accepted",
    "gt_cpm",
    "gt_valid",
];

pub const TRUTH_HEADER: [&str; 3] = ["window_index", "start_s", "truth_cpm"];

pub const SWEEP_HEADER: [&str; 5] = [
    "tau_cpm",
    "mae_cpm",
    "rmse_cpm",
    "n_retained",
    "retained_fraction",
];

pub(crate) fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn opt4(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Format {
            offset,
            message: format!("{kind:?}"),
        },
    }
}

pub fn write_records_to<W: Write>(records: &[WindowRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.window_index.to_string(),
            fmt4(r.start_s),
            opt4(r.rr_left),
            opt4(r.rr_right),
            opt4(r.rr_fused),
            opt4(r.discrepancy_cpm),
            r.accepted.to_string(),
            opt4(r.gt_cpm),
            r.gt_valid.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(records: &[WindowRecord], path: impl AsRef<Path>) -> Result<()> {
    write_records_to(records, File::create(path)?)
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> &'a str {
    rec.get(i).unwrap_or("")
}

pub fn read_records_from<R: Read>(input: R) -> Result<Vec<WindowRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Format {
            offset: 0,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let offset = row.position().map_or(0, |p| p.byte());
        let bad = |col: usize| Error::Format {
            offset,
            message: format!("bad {} value {:?}", RECORD_HEADER[col], field(&row, col)),
        };
        let real = |col: usize| -> Result<Option<f64>> {
            match field(&row, col) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(col)),
            }
        };
        let flag = |col: usize| -> Result<bool> { field(&row, col).parse().map_err(|_| bad(col)) };
        out.push(WindowRecord {
            window_index: field(&row, 0).parse().map_err(|_| bad(0))?,
            start_s: real(1)?.ok_or_else(|| bad(1))?,
            rr_left: real(2)?,
            rr_right: real(3)?,
            rr_fused: real(4)?,
            discrepancy_cpm: real(5)?,
            accepted: flag(6)?,
            gt_cpm: real(7)?,
            gt_valid: flag(8)?,
        });
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<WindowRecord>> {
    read_records_from(BufReader::new(File::open(path)?))
}

pub fn write_sweep_to<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            fmt4(r.tau_cpm),
            opt4(r.mae_cpm),
            opt4(r.rmse_cpm),
            r.n_retained.to_string(),
            fmt4(r.retained_fraction),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    write_sweep_to(rows, File::create(path)?)
}

/// Known per-window rates of a synthetic scenario.
pub fn write_truth(truth_cpm: &[f64], stride_s: f64, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(TRUTH_HEADER).map_err(csv_err)?;
    for (i, &t) in truth_cpm.iter().enumerate() {
        w.write_record([i.to_string(), fmt4(i as f64 * stride_s), fmt4(t)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
