//! Patient records: admissions ordered in time, temporal features, 30-day
//! readmission and next-visit diagnosis labels, temporal rescaling fit on
//! training data only, and note-chunk attachment.

pub mod tables;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::VectorStore;

/// Note chunk embeddings are produced by an external text encoder with this
/// output width.
pub const CHUNK_DIM: usize = 768;

pub const READMISSION_WINDOW_DAYS: f64 = 30.0;

const SECONDS_PER_DAY: f64 = 86400.0;

/// One hospital admission. Times are epoch seconds; code lists hold
/// vocabulary indices (never the pad index 0) in source sequence order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Admission {
    pub patient_id: String,
    pub admission_id: String,
    pub admit_time: i64,
    pub discharge_time: i64,
    /// Length of stay in fractional days.
    pub duration_days: f64,
    /// Days between the previous discharge and this admit; absent for the
    /// first admission of a patient.
    pub days_since_prior: Option<f64>,
    pub diag_codes: Vec<usize>,
    pub proc_codes: Vec<usize>,
    pub med_codes: Vec<usize>,
    pub note_chunk_ids: Vec<String>,
    /// True when the next admission of the same patient starts less than 30
    /// days after this discharge. The final admission is always false.
    pub readmitted_30d: bool,
    /// Deduplicated diagnosis indices of the next admission; absent for the
    /// final admission, which therefore cannot be a diagnosis training
    /// sample.
    pub next_diag_multihot: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    /// Ascending by admit time.
    pub admissions: Vec<Admission>,
}

impl PatientRecord {
    pub fn n_admissions(&self) -> usize {
        self.admissions.len()
    }

    pub fn has_positive_readmission(&self) -> bool {
        self.admissions.iter().any(|a| a.readmitted_30d)
    }
}

/// Groups raw admission rows into per-patient records ordered by admit
/// time. Duplicate admission ids are a data error.
pub fn group_into_patients(rows: Vec<tables::AdmissionRow>) -> Result<Vec<PatientRecord>> {
    let mut seen = HashMap::new();
    let mut by_patient: HashMap<String, Vec<tables::AdmissionRow>> = HashMap::new();
    for row in rows {
        if let Some(prev) = seen.insert(row.admission_id.clone(), row.patient_id.clone()) {
            return Err(Error::Integrity(format!(
                "admission id {} appears under patients {} and {}",
                row.admission_id, prev, row.patient_id
            )));
        }
        by_patient.entry(row.patient_id.clone()).or_default().push(row);
    }
    let mut patients: Vec<PatientRecord> = by_patient
        .into_iter()
        .map(|(patient_id, mut rows)| {
            rows.sort_by(|a, b| {
                (a.admit_time, a.discharge_time, &a.admission_id)
                    .cmp(&(b.admit_time, b.discharge_time, &b.admission_id))
            });
            PatientRecord {
                patient_id,
                admissions: rows
                    .into_iter()
                    .map(|r| Admission {
                        patient_id: r.patient_id,
                        admission_id: r.admission_id,
                        admit_time: r.admit_time,
                        discharge_time: r.discharge_time,
                        duration_days: 0.0,
                        days_since_prior: None,
                        diag_codes: Vec::new(),
                        proc_codes: Vec::new(),
                        med_codes: Vec::new(),
                        note_chunk_ids: Vec::new(),
                        readmitted_30d: false,
                        next_diag_multihot: None,
                    })
                    .collect(),
            }
        })
        .collect();
    patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(patients)
}

/// Fills duration and gap-to-previous-visit features. A discharge before
/// its own admit is corrupt input; a next admit before the previous
/// discharge (overlapping stays) clamps the gap to zero.
pub fn compute_temporal_features(record: &mut PatientRecord) -> Result<()> {
    let mut prev_discharge: Option<i64> = None;
    for adm in &mut record.admissions {
        if adm.discharge_time < adm.admit_time {
            return Err(Error::Integrity(format!(
                "admission {} discharges before it admits",
                adm.admission_id
            )));
        }
        adm.duration_days = (adm.discharge_time - adm.admit_time) as f64 / SECONDS_PER_DAY;
        adm.days_since_prior = prev_discharge
            .map(|d| ((adm.admit_time - d) as f64 / SECONDS_PER_DAY).max(0.0));
        prev_discharge = Some(adm.discharge_time);
    }
    Ok(())
}

/// Marks admissions followed by another admit strictly less than 30 days
/// after discharge. Single-visit patients and final admissions stay false.
pub fn label_readmission(record: &mut PatientRecord) {
    for i in 0..record.admissions.len() {
        let label = if i + 1 < record.admissions.len() {
            let gap = (record.admissions[i + 1].admit_time
                - record.admissions[i].discharge_time) as f64
                / SECONDS_PER_DAY;
            gap < READMISSION_WINDOW_DAYS
        } else {
            false
        };
        record.admissions[i].readmitted_30d = label;
    }
}

/// Copies each next admission's deduplicated diagnosis indices back as the
/// prediction target of the current one. The final admission gets none and
/// is unusable for diagnosis training.
pub fn label_future_diagnoses(record: &mut PatientRecord) {
    for i in 0..record.admissions.len() {
        let target = if i + 1 < record.admissions.len() {
            let mut codes = record.admissions[i + 1].diag_codes.clone();
            codes.sort_unstable();
            codes.dedup();
            Some(codes)
        } else {
            None
        };
        record.admissions[i].next_diag_multihot = target;
    }
}

/// Min-max rescaler for one temporal feature, fit on training folds only.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemporalRescaler {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl TemporalRescaler {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for v in values {
            any = true;
            min = min.min(v);
            max = max.max(v);
        }
        if !any {
            log::warn!("temporal rescaler fit on no values; feature is degenerate");
            return TemporalRescaler {
                min: 0.0,
                max: 0.0,
                degenerate: true,
            };
        }
        let degenerate = max == min;
        if degenerate {
            log::warn!("temporal feature is constant ({min}); rescaled to zero everywhere");
        }
        TemporalRescaler { min, max, degenerate }
    }

    /// Maps into [0, 1]; values outside the training range clamp to the
    /// edges, a constant feature maps to zero.
    pub fn transform(&self, v: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Attaches note chunk ids from the manifest. Chunks must exist in the
/// store and reference known admissions.
pub fn attach_note_chunks(
    records: &mut [PatientRecord],
    manifest: &[(String, String)],
    chunks: &VectorStore,
) -> Result<()> {
    let mut locate: HashMap<String, (usize, usize)> = HashMap::new();
    for (pi, record) in records.iter().enumerate() {
        for (ai, adm) in record.admissions.iter().enumerate() {
            locate.insert(adm.admission_id.clone(), (pi, ai));
        }
    }
    for (adm_id, chunk_id) in manifest {
        if !chunks.contains(chunk_id) {
            return Err(Error::Integrity(format!(
                "chunk {chunk_id} (admission {adm_id}) is missing from the embedding store"
            )));
        }
        match locate.get(adm_id.as_str()) {
            Some(&(pi, ai)) => records[pi].admissions[ai]
                .note_chunk_ids
                .push(chunk_id.clone()),
            None => {
                return Err(Error::Integrity(format!(
                    "chunk manifest references unknown admission {adm_id}"
                )))
            }
        }
    }
    Ok(())
}

/// Loads a chunk embedding store and enforces the fixed text width.
pub fn load_chunk_store(path: &std::path::Path) -> Result<VectorStore> {
    let store = VectorStore::read(path)?;
    if store.dim() != CHUNK_DIM {
        return Err(Error::Format(format!(
            "{}: chunk store dim {} != {CHUNK_DIM}",
            path.display(),
            store.dim()
        )));
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Diag,
    Proc,
    Med,
}

/// Rolls raw ICD-9 rows into per-admission code strings, optionally pushed
/// through a crosswalk (parent -> CCS). Unparseable or unmapped codes are
/// dropped; the count comes back for the caller to log.
pub fn roll_code_rows(
    rows: &[tables::CodeRow],
    system: crate::codes::CodeSystem,
    crosswalk: Option<&crate::codes::MappingTable>,
) -> (HashMap<String, Vec<String>>, usize) {
    let mut by_admission: HashMap<String, Vec<String>> = HashMap::new();
    let mut dropped = 0usize;
    for row in rows {
        let raw = crate::codes::RawCode::new(system, row.icd9_code.as_str());
        let rolled = match crate::codes::rollup_icd9(&raw) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("dropping code: {e}");
                dropped += 1;
                continue;
            }
        };
        let text = match crosswalk {
            Some(table) => match crate::codes::map_code(&rolled.text, table) {
                Ok(mapped) => mapped.text,
                Err(e) => {
                    log::debug!("dropping code: {e}");
                    dropped += 1;
                    continue;
                }
            },
            None => rolled.text,
        };
        by_admission
            .entry(row.admission_id.clone())
            .or_default()
            .push(text);
    }
    (by_admission, dropped)
}

/// Maps prescription NDC codes to CUIs. Misses are dropped and counted.
pub fn roll_prescription_rows(
    rows: &[tables::PrescriptionRow],
    crosswalk: &crate::codes::MappingTable,
) -> (HashMap<String, Vec<String>>, usize) {
    let mut by_admission: HashMap<String, Vec<String>> = HashMap::new();
    let mut dropped = 0usize;
    for row in rows {
        match crate::codes::map_code(&row.ndc, crosswalk) {
            Ok(mapped) => by_admission
                .entry(row.admission_id.clone())
                .or_default()
                .push(mapped.text),
            Err(e) => {
                log::debug!("dropping prescription: {e}");
                dropped += 1;
            }
        }
    }
    (by_admission, dropped)
}

/// Fills one code-index list on every admission from rolled code strings.
/// Codes outside the vocabulary are dropped and counted; rolled entries for
/// admissions not present in `records` are ignored (their patients were
/// filtered upstream).
pub fn attach_code_indices(
    records: &mut [PatientRecord],
    rolled: &HashMap<String, Vec<String>>,
    vocab: &crate::codes::CodeVocabulary,
    kind: CodeKind,
) -> usize {
    let mut out_of_vocab = 0usize;
    for record in records.iter_mut() {
        for adm in record.admissions.iter_mut() {
            let Some(codes) = rolled.get(&adm.admission_id) else {
                continue;
            };
            let mut indices = Vec::with_capacity(codes.len());
            for code in codes {
                match vocab.index_of(code) {
                    Some(idx) => indices.push(idx),
                    None => out_of_vocab += 1,
                }
            }
            match kind {
                CodeKind::Diag => adm.diag_codes = indices,
                CodeKind::Proc => adm.proc_codes = indices,
                CodeKind::Med => adm.med_codes = indices,
            }
        }
    }
    if out_of_vocab > 0 {
        log::warn!("dropped {out_of_vocab} codes outside the vocabulary");
    }
    out_of_vocab
}

/// Writes one patient per line as JSON.
pub fn write_records(path: &std::path::Path, records: &[PatientRecord]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Format(format!("serialize record: {e}")))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_records(path: &std::path::Path) -> Result<Vec<PatientRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: PatientRecord = serde_json::from_str(line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(r);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn admission(id: &str, admit_day: i64, discharge_day: i64) -> tables::AdmissionRow {
        tables::AdmissionRow {
            patient_id: "p".into(),
            admission_id: id.into(),
            admit_time: admit_day * 86400,
            discharge_time: discharge_day * 86400,
        }
    }

    fn patient(days: &[(i64, i64)]) -> PatientRecord {
        let rows = days
            .iter()
            .enumerate()
            .map(|(i, &(a, d))| admission(&format!("a{i}"), a, d))
            .collect();
        let mut records = group_into_patients(rows).unwrap();
        assert_eq!(records.len(), 1);
        records.pop().unwrap()
    }

    #[test]
    fn temporal_features_from_reference_case() {
        // Discharge day 10, next admit day 25: gap 15.
        let mut p = patient(&[(0, 10), (25, 30)]);
        compute_temporal_features(&mut p).unwrap();
        assert_eq!(p.admissions[0].duration_days, 10.0);
        assert_eq!(p.admissions[0].days_since_prior, None);
        assert_eq!(p.admissions[1].days_since_prior, Some(15.0));
    }

    #[test]
    fn overlapping_stays_clamp_to_zero_gap() {
        let mut p = patient(&[(0, 10), (8, 12)]);
        compute_temporal_features(&mut p).unwrap();
        assert_eq!(p.admissions[1].days_since_prior, Some(0.0));
    }

    #[test]
    fn inverted_interval_is_an_error() {
        let mut p = patient(&[(10, 5)]);
        let err = compute_temporal_features(&mut p).unwrap_err();
        assert!(err.to_string().contains("a0"), "{err}");
    }

    #[test]
    fn readmission_boundary_is_strict() {
        // Gap 15 -> true.
        let mut p = patient(&[(0, 10), (25, 30)]);
        label_readmission(&mut p);
        assert!(p.admissions[0].readmitted_30d);
        assert!(!p.admissions[1].readmitted_30d);

        // Gap exactly 30 -> false.
        let mut p = patient(&[(0, 10), (40, 45)]);
        label_readmission(&mut p);
        assert!(!p.admissions[0].readmitted_30d);

        // Just under 30 -> true.
        let mut p = patient(&[(0, 10), (39, 45)]);
        label_readmission(&mut p);
        assert!(p.admissions[0].readmitted_30d);
    }

    #[test]
    fn single_visit_is_negative() {
        let mut p = patient(&[(0, 3)]);
        label_readmission(&mut p);
        assert!(!p.admissions[0].readmitted_30d);
    }

    #[test]
    fn future_diagnoses_shift_back_and_dedup() {
        let mut p = patient(&[(0, 1), (5, 6), (50, 55)]);
        p.admissions[1].diag_codes = vec![4, 2, 4];
        p.admissions[2].diag_codes = vec![7];
        label_future_diagnoses(&mut p);
        assert_eq!(p.admissions[0].next_diag_multihot, Some(vec![2, 4]));
        assert_eq!(p.admissions[1].next_diag_multihot, Some(vec![7]));
        assert_eq!(p.admissions[2].next_diag_multihot, None);
    }

    #[test]
    fn rescaler_maps_to_unit_interval_and_clamps() {
        let r = TemporalRescaler::fit([2.0, 6.0, 4.0]);
        assert_eq!(r.transform(2.0), 0.0);
        assert_eq!(r.transform(6.0), 1.0);
        assert_eq!(r.transform(4.0), 0.5);
        assert_eq!(r.transform(-10.0), 0.0);
        assert_eq!(r.transform(100.0), 1.0);
    }

    #[test]
    fn constant_feature_is_degenerate_zero() {
        let r = TemporalRescaler::fit([3.0, 3.0]);
        assert!(r.degenerate);
        assert_eq!(r.transform(3.0), 0.0);
        assert_eq!(r.transform(99.0), 0.0);
    }

    #[test]
    fn chunk_attachment_validates_ids() {
        let mut store = VectorStore::new(CHUNK_DIM);
        store.insert("c1", &vec![0.0; CHUNK_DIM]).unwrap();
        let mut records = vec![patient(&[(0, 1)])];
        let manifest = vec![("a0".to_string(), "c1".to_string())];
        attach_note_chunks(&mut records, &manifest, &store).unwrap();
        assert_eq!(records[0].admissions[0].note_chunk_ids, vec!["c1"]);

        let manifest = vec![("a0".to_string(), "missing".to_string())];
        assert!(attach_note_chunks(&mut records, &manifest, &store).is_err());

        let manifest = vec![("nope".to_string(), "c1".to_string())];
        assert!(attach_note_chunks(&mut records, &manifest, &store).is_err());
    }

    #[test]
    fn records_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut p = patient(&[(0, 10), (25, 30)]);
        compute_temporal_features(&mut p).unwrap();
        label_readmission(&mut p);
        write_records(&path, &[p.clone()]).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].admissions[0].days_since_prior, None);
        assert_eq!(back[0].admissions[1].days_since_prior, Some(15.0));
        assert!(back[0].admissions[0].readmitted_30d);
    }

    #[test]
    fn code_rows_roll_and_attach() {
        use crate::codes::{CodeSystem, CodeVocabulary, MappingTable, RolledSystem};
        let rows = vec![
            tables::CodeRow {
                admission_id: "a0".into(),
                seq_num: 1,
                icd9_code: "4280".into(),
            },
            tables::CodeRow {
                admission_id: "a0".into(),
                seq_num: 2,
                icd9_code: "junk!".into(),
            },
            tables::CodeRow {
                admission_id: "a1".into(),
                seq_num: 1,
                icd9_code: "25000".into(),
            },
        ];
        let (rolled, dropped) = roll_code_rows(&rows, CodeSystem::Icd9Diag, None);
        assert_eq!(dropped, 1);
        assert_eq!(rolled["a0"], vec!["D_428"]);
        assert_eq!(rolled["a1"], vec!["D_250"]);

        let mut table = MappingTable::new(RolledSystem::CcsDiag);
        table.insert("D_428", "C108");
        let (ccs, dropped) = roll_code_rows(&rows, CodeSystem::Icd9Diag, Some(&table));
        assert_eq!(dropped, 2, "junk plus the unmapped D_250");
        assert_eq!(ccs["a0"], vec!["C108"]);

        let vocab = CodeVocabulary::build(["D_428"]);
        let mut records = vec![patient(&[(0, 1), (50, 51)])];
        let oov = attach_code_indices(&mut records, &rolled, &vocab, CodeKind::Diag);
        assert_eq!(oov, 1, "D_250 is outside the vocabulary");
        assert_eq!(
            records[0].admissions[0].diag_codes,
            vec![vocab.index_of("D_428").unwrap()]
        );
        assert!(records[0].admissions[1].diag_codes.is_empty());
    }

    #[test]
    fn prescriptions_map_through_crosswalk() {
        use crate::codes::{MappingTable, RolledSystem};
        let rows = vec![
            tables::PrescriptionRow {
                admission_id: "a0".into(),
                start_date: 0,
                ndc: "00000000001".into(),
            },
            tables::PrescriptionRow {
                admission_id: "a0".into(),
                start_date: 0,
                ndc: "99999999999".into(),
            },
        ];
        let mut table = MappingTable::new(RolledSystem::Cui);
        table.insert("00000000001", "CUI0001");
        let (rolled, dropped) = roll_prescription_rows(&rows, &table);
        assert_eq!(dropped, 1);
        assert_eq!(rolled["a0"], vec!["CUI0001"]);
    }
}
