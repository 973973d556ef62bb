//! Ingestion of clinical PSA series.
//!
//! The input is a normalized CSV with the header
//! `patient_id,day,psa,androgen,on_treatment`, one patient per file.
//! `androgen` may be empty; `on_treatment` is `1`/`0` or `true`/`false`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 5] = ["patient_id", "day", "psa", "androgen", "on_treatment"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub day: f64,
    pub psa: f64,
    pub androgen: Option<f64>,
    pub on_treatment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSeries {
    pub patient_id: String,
    pub rows: Vec<PatientRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub rows: usize,
    pub first_day: f64,
    pub last_day: f64,
    pub psa_min: f64,
    pub psa_max: f64,
    /// PSA at the first on-treatment row.
    pub psa_init: f64,
    /// Maximal runs of on-treatment rows.
    pub cycles: usize,
    /// Changes of the on-treatment flag between consecutive rows.
    pub switches: usize,
    pub androgen_rows: usize,
}

impl PatientSeries {
    pub fn psa_init(&self) -> f64 {
        self.rows
            .iter()
            .find(|r| r.on_treatment)
            .map(|r| r.psa)
            .expect("validated series has an on-treatment row")
    }

    pub fn switches(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[0].on_treatment != w[1].on_treatment)
            .count()
    }

    pub fn cycles(&self) -> usize {
        let starts = self
            .rows
            .windows(2)
            .filter(|w| !w[0].on_treatment && w[1].on_treatment)
            .count();
        starts + usize::from(self.rows.first().is_some_and(|r| r.on_treatment))
    }

    pub fn summary(&self) -> PatientSummary {
        let psa = self.rows.iter().map(|r| r.psa);
        PatientSummary {
            patient_id: self.patient_id.clone(),
            rows: self.rows.len(),
            first_day: self.rows[0].day,
            last_day: self.rows[self.rows.len() - 1].day,
            psa_min: psa.clone().fold(f64::INFINITY, f64::min),
            psa_max: psa.fold(f64::NEG_INFINITY, f64::max),
            psa_init: self.psa_init(),
            cycles: self.cycles(),
            switches: self.switches(),
            androgen_rows: self.rows.iter().filter(|r| r.androgen.is_some()).count(),
        }
    }
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Row {
        row,
        message: format!("column `{column}`: `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Row {
            row,
            message: format!("column `{column}`: `{raw}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_flag(row: usize, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(Error::Row {
            row,
            message: format!("column `on_treatment`: `{raw}` is not 0/1/true/false"),
        }),
    }
}

/// Parses a series from any reader. Row numbers in errors count data rows
/// from 1 (the header is row 0).
pub fn read_patient_csv<R: Read>(reader: R) -> Result<PatientSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 5];
    for (k, name) in COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Row {
                row: 0,
                message: format!("missing column `{name}` in header"),
            })?;
    }

    let mut id: Option<String> = None;
    let mut rows: Vec<PatientRow> = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let pid = field(0);
        if pid.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty patient_id".into(),
            });
        }
        match &id {
            None => id = Some(pid.to_string()),
            Some(first) if first != pid => {
                return Err(Error::Row {
                    row,
                    message: format!(
                        "patient_id `{pid}` differs from `{first}`; one patient per file"
                    ),
                })
            }
            _ => {}
        }
        let day = parse_number(row, "day", field(1))?;
        let psa = parse_number(row, "psa", field(2))?;
        if psa < 0.0 {
            return Err(Error::Row {
                row,
                message: format!("negative psa {psa}"),
            });
        }
        let androgen = match field(3) {
            "" => None,
            raw => Some(parse_number(row, "androgen", raw)?),
        };
        let on_treatment = parse_flag(row, field(4))?;
        if let Some(prev) = rows.last() {
            if day <= prev.day {
                return Err(Error::Row {
                    row,
                    message: format!("day {day} does not follow previous day {}", prev.day),
                });
            }
        }
        rows.push(PatientRow {
            day,
            psa,
            androgen,
            on_treatment,
        });
    }
    let Some(patient_id) = id else {
        return Err(Error::Row {
            row: 0,
            message: "no data rows".into(),
        });
    };
    if !rows.iter().any(|r| r.on_treatment) {
        return Err(Error::Row {
            row: 0,
            message: "series has no on-treatment row".into(),
        });
    }
    Ok(PatientSeries { patient_id, rows })
}

pub fn ingest_patient_csv(path: &Path) -> Result<PatientSeries> {
    let file = std::fs::File::open(path)?;
    read_patient_csv(file)
}
