//! File output: trajectory, event and optimizer-trace CSVs plus JSON reports.
//!
//! CSVs use `.` decimals, shortest round-trip float formatting, a fixed
//! column order and LF line endings. An optional first line
//! `# generated_unix=<seconds>` records the wall-clock time; readers skip
//! lines starting with `#`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{EventKind, Mode};
use crate::optimizer::TraceRow;
use crate::sim::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub mode: Mode,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub psa: f64,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub k: usize,
    pub tau: f64,
    pub kind: EventKind,
    pub psa_at_tau: f64,
    pub tau_prime_1: f64,
    pub tau_prime_2: f64,
}

/// Header line policy for CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stamp {
    None,
    Unix(u64),
}

impl Stamp {
    pub fn now() -> Self {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Stamp::Unix(secs)
    }

    fn write_to<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        match self {
            Stamp::None => Ok(()),
            Stamp::Unix(s) => writeln!(w, "# generated_unix={s}"),
        }
    }
}

/// Every `stride`-th sample plus all knots, in time order.
pub fn trajectory_rows(path: &SamplePath, stride: usize) -> Vec<TrajectoryRow> {
    let stride = stride.max(1);
    path.samples
        .iter()
        .enumerate()
        .filter(|(j, s)| s.knot || j % stride == 0)
        .map(|(_, s)| {
            let x = &s.state;
            TrajectoryRow {
                t: x.t,
                mode: x.q,
                x1: x.x1,
                x2: x.x2,
                x3: x.x3,
                psa: x.psa(),
                z1: x.z1,
                z2: x.z2,
            }
        })
        .collect()
}

pub fn event_rows(path: &SamplePath) -> Vec<EventRow> {
    path.events
        .iter()
        .map(|e| EventRow {
            k: e.k,
            tau: e.tau,
            kind: e.kind,
            psa_at_tau: e.state_pre.psa(),
            tau_prime_1: e.tau_prime[0],
            tau_prime_2: e.tau_prime[1],
        })
        .collect()
}

/// Writes serializable rows as CSV with a header, after the stamp line.
pub fn write_csv<W: Write, T: Serialize>(mut w: W, rows: &[T], stamp: Stamp) -> Result<()> {
    stamp.write_to(&mut w)?;
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// CSV writer for rows that arrive one at a time.
pub struct CsvStream<W: Write> {
    wtr: csv::Writer<W>,
}

impl<W: Write> CsvStream<W> {
    pub fn new(mut w: W, stamp: Stamp) -> Result<Self> {
        stamp.write_to(&mut w)?;
        let wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        Ok(Self { wtr })
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.wtr.serialize(row)?;
        self.wtr.flush()?;
        Ok(())
    }
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T], stamp: Stamp) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), rows, stamp)
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads rows back, skipping `#` comment lines.
pub fn read_csv<T: for<'de> Deserialize<'de>, R: std::io::Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_csv_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_csv(File::open(path)?)
}

/// Trace rows re-read from an optimizer CSV.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv_file(path)
}
