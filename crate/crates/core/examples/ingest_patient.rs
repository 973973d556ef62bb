//! Validates and summarizes a patient PSA series.
//!
//! `cargo run --example ingest_patient -- [file.csv]`

use std::path::PathBuf;

use ias_ipa::ingest_patient_csv;

fn main() -> ias_ipa::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/patient_sample.csv")
        });
    let series = ingest_patient_csv(&path)?;
    println!("{}", serde_json::to_string_pretty(&series.summary())?);
    for r in series.rows.iter().take(5) {
        println!("day {:>4} psa {:>5} on {}", r.day, r.psa, r.on_treatment);
    }
    Ok(())
}
