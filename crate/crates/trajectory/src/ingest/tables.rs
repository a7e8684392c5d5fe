//! Readers for the delimited source tables. Timestamps parse as
//! `YYYY-MM-DD HH:MM:SS` (bare dates allowed) into epoch seconds.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::Deserialize;

use crate::error::{Error, Result};

pub fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Ok(dt.and_utc().timestamp());
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
    }
    Err(Error::Format(format!("cannot parse timestamp {s:?}")))
}

#[derive(Debug, Clone)]
pub struct AdmissionRow {
    pub patient_id: String,
    pub admission_id: String,
    pub admit_time: i64,
    pub discharge_time: i64,
}

#[derive(Debug, Deserialize)]
struct RawAdmissionRow {
    patient_id: String,
    admission_id: String,
    admit_time: String,
    discharge_time: String,
}

pub fn read_admissions(path: &Path) -> Result<Vec<AdmissionRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let raw: RawAdmissionRow = rec?;
        rows.push(AdmissionRow {
            admit_time: parse_timestamp(&raw.admit_time)?,
            discharge_time: parse_timestamp(&raw.discharge_time)?,
            patient_id: raw.patient_id,
            admission_id: raw.admission_id,
        });
    }
    Ok(rows)
}

/// One coded row of DIAGNOSES_ICD / PROCEDURES_ICD.
#[derive(Debug, Clone, Deserialize)]
pub struct CodeRow {
    pub admission_id: String,
    pub seq_num: i64,
    pub icd9_code: String,
}

pub fn read_code_table(path: &Path) -> Result<Vec<CodeRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<CodeRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    // Storage keeps the sequence order; models ignore it.
    rows.sort_by(|a, b| (&a.admission_id, a.seq_num).cmp(&(&b.admission_id, b.seq_num)));
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PrescriptionRow {
    pub admission_id: String,
    pub start_date: i64,
    pub ndc: String,
}

#[derive(Debug, Deserialize)]
struct RawPrescriptionRow {
    admission_id: String,
    start_date: String,
    ndc: String,
}

pub fn read_prescriptions(path: &Path) -> Result<Vec<PrescriptionRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let raw: RawPrescriptionRow = rec?;
        rows.push(PrescriptionRow {
            start_date: parse_timestamp(&raw.start_date)?,
            admission_id: raw.admission_id,
            ndc: raw.ndc,
        });
    }
    rows.sort_by(|a, b| (&a.admission_id, a.start_date).cmp(&(&b.admission_id, b.start_date)));
    Ok(rows)
}

/// Chunk manifest: `admission_id<TAB>chunk_id` per line.
pub fn read_chunk_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (adm, chunk) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: expected admission_id<TAB>chunk_id",
                path.display(),
                lineno + 1
            ))
        })?;
        rows.push((adm.trim().to_string(), chunk.trim().to_string()));
    }
    Ok(rows)
}
