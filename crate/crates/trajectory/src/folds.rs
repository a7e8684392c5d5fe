//! Cross-validation machinery: patient-level stratified folds (no patient
//! ever crosses folds), per-fold admission expansion, negative subsampling
//! for the readmission task, and sliding windows over admission histories
//! for the recurrent models.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ingest::PatientRecord;
use crate::rng;

pub const DEFAULT_N_FOLDS: usize = 10;

/// Patient to fold assignment, reproducible from the recorded seed.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    assignment: HashMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.assignment.get(patient_id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Patients of one fold, sorted for determinism.
    pub fn patients_in(&self, fold: usize) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(p, _)| p.as_str())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# n_folds={}", self.n_folds)?;
        let mut patients: Vec<&String> = self.assignment.keys().collect();
        patients.sort();
        for p in patients {
            writeln!(out, "{p}\t{}", self.assignment[p])?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut seed = None;
        let mut n_folds = None;
        let mut assignment = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("seed=") {
                    seed = v.parse::<u64>().ok();
                } else if let Some(v) = rest.strip_prefix("n_folds=") {
                    n_folds = v.parse::<usize>().ok();
                }
                continue;
            }
            let (patient, fold) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!(
                    "{}:{}: expected patient_id<TAB>fold",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let fold: usize = fold.trim().parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad fold number", path.display(), lineno + 1))
            })?;
            assignment.insert(patient.trim().to_string(), fold);
        }
        let seed = seed.ok_or_else(|| {
            Error::Format(format!("{}: missing seed header", path.display()))
        })?;
        let n_folds = n_folds.ok_or_else(|| {
            Error::Format(format!("{}: missing n_folds header", path.display()))
        })?;
        if let Some(f) = assignment.values().find(|&&f| f >= n_folds) {
            return Err(Error::Format(format!(
                "{}: fold {f} out of range for n_folds={n_folds}",
                path.display()
            )));
        }
        Ok(FoldPlan {
            n_folds,
            seed,
            assignment,
        })
    }
}

/// Assigns patients to folds, stratified by whether the patient has any
/// positive readmission. Each class is shuffled with the seed and dealt
/// round-robin, so per-fold class counts deviate from perfect stratification
/// by at most one.
pub fn stratified_patient_folds(
    records: &[PatientRecord],
    n_folds: usize,
    seed: u64,
) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(Error::Config("n_folds must be positive".into()));
    }
    if records.len() < n_folds {
        return Err(Error::Config(format!(
            "cannot split {} patients into {n_folds} folds",
            records.len()
        )));
    }
    let mut positives: Vec<&str> = Vec::new();
    let mut negatives: Vec<&str> = Vec::new();
    for r in records {
        if r.has_positive_readmission() {
            positives.push(&r.patient_id);
        } else {
            negatives.push(&r.patient_id);
        }
    }
    let mut assignment = HashMap::with_capacity(records.len());
    for (label, class) in [("fold-pos", &mut positives), ("fold-neg", &mut negatives)] {
        let mut shuffle_rng = rng::stream(seed, label, 0);
        class.shuffle(&mut shuffle_rng);
        for (i, patient) in class.iter().enumerate() {
            assignment.insert(patient.to_string(), i % n_folds);
        }
    }
    Ok(FoldPlan {
        n_folds,
        seed,
        assignment,
    })
}

/// Position of one admission inside a record slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdmissionRef {
    pub patient: usize,
    pub index: usize,
}

impl AdmissionRef {
    pub fn admission<'a>(&self, records: &'a [PatientRecord]) -> &'a crate::ingest::Admission {
        &records[self.patient].admissions[self.index]
    }
}

/// Expands the plan into per-fold admission lists and shuffles each fold
/// deterministically.
pub fn expand_and_shuffle(
    plan: &FoldPlan,
    records: &[PatientRecord],
    seed: u64,
) -> Result<Vec<Vec<AdmissionRef>>> {
    let mut folds: Vec<Vec<AdmissionRef>> = vec![Vec::new(); plan.n_folds];
    for (pi, record) in records.iter().enumerate() {
        let fold = plan.fold_of(&record.patient_id).ok_or_else(|| {
            Error::Integrity(format!(
                "patient {} is missing from the fold plan",
                record.patient_id
            ))
        })?;
        for index in 0..record.admissions.len() {
            folds[fold].push(AdmissionRef { patient: pi, index });
        }
    }
    for (f, fold) in folds.iter_mut().enumerate() {
        let mut shuffle_rng = rng::stream(seed, "expand-shuffle", f as u64);
        fold.shuffle(&mut shuffle_rng);
    }
    Ok(folds)
}

/// Admission-level stratified split. Leaks patients across folds and exists
/// only for comparison runs; never use it for reported results.
pub fn admission_level_folds(
    records: &[PatientRecord],
    n_folds: usize,
    seed: u64,
) -> Result<Vec<Vec<AdmissionRef>>> {
    if n_folds == 0 {
        return Err(Error::Config("n_folds must be positive".into()));
    }
    log::warn!("admission-level split leaks patients across folds; results will be optimistic");
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (pi, record) in records.iter().enumerate() {
        for (index, adm) in record.admissions.iter().enumerate() {
            let r = AdmissionRef { patient: pi, index };
            if adm.readmitted_30d {
                positives.push(r);
            } else {
                negatives.push(r);
            }
        }
    }
    let mut folds: Vec<Vec<AdmissionRef>> = vec![Vec::new(); n_folds];
    for (label, class) in [("adm-pos", &mut positives), ("adm-neg", &mut negatives)] {
        let mut shuffle_rng = rng::stream(seed, label, 0);
        class.shuffle(&mut shuffle_rng);
        for (i, r) in class.iter().enumerate() {
            folds[i % n_folds].push(*r);
        }
    }
    for (f, fold) in folds.iter_mut().enumerate() {
        let mut shuffle_rng = rng::stream(seed, "adm-expand", f as u64);
        fold.shuffle(&mut shuffle_rng);
    }
    Ok(folds)
}

/// Balances a fold's admissions 1:1 by sampling negatives down to the
/// positive count. Readmission task only. Folds with fewer negatives than
/// positives keep everything (with a warning); folds without positives
/// cannot be balanced at all.
pub fn subsample_negatives(
    fold: &[AdmissionRef],
    records: &[PatientRecord],
    seed: u64,
) -> Result<Vec<AdmissionRef>> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for &r in fold {
        if r.admission(records).readmitted_30d {
            positives.push(r);
        } else {
            negatives.push(r);
        }
    }
    if positives.is_empty() {
        return Err(Error::Integrity(
            "cannot balance a fold with zero positive admissions".into(),
        ));
    }
    let mut sample_rng = rng::stream(seed, "subsample-neg", 0);
    if negatives.len() < positives.len() {
        log::warn!(
            "fold has {} negatives for {} positives; keeping all negatives",
            negatives.len(),
            positives.len()
        );
    } else {
        negatives.shuffle(&mut sample_rng);
        negatives.truncate(positives.len());
    }
    let mut out = positives;
    out.extend(negatives);
    out.shuffle(&mut sample_rng);
    Ok(out)
}

/// Train/validation/test fold indices for one cross-validation iteration.
/// Validation is the fold after the test fold, the rest train.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: usize,
    pub test: usize,
}

impl SplitSpec {
    pub fn rotation(test: usize, n_folds: usize) -> Self {
        assert!(test < n_folds, "test fold out of range");
        let val = (test + 1) % n_folds;
        let train = (0..n_folds).filter(|&f| f != test && f != val).collect();
        SplitSpec { train, val, test }
    }
}

/// A fixed-length window over one patient's history. Slot i is None for a
/// front dummy; real slots hold admission indices. The admission at
/// `label_from` sits immediately after the window and provides the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSample {
    pub patient: usize,
    pub slots: Vec<Option<usize>>,
    pub real_count: usize,
    pub label_from: usize,
}

impl WindowSample {
    /// Index of the window's last real admission.
    pub fn last_real(&self) -> usize {
        self.label_from - 1
    }
}

/// Builds every usable window of length k for one patient: one window per
/// label position 1..m-1, front-padded when fewer than k admissions
/// precede it. Patients with fewer than two admissions yield nothing.
pub fn build_windows(patient: usize, record: &PatientRecord, k: usize) -> Vec<WindowSample> {
    assert!(k >= 1, "window length must be at least 1");
    let m = record.admissions.len();
    if m < 2 {
        return Vec::new();
    }
    let mut windows = Vec::with_capacity(m - 1);
    for label_from in 1..m {
        let mut slots = Vec::with_capacity(k);
        for j in 0..k {
            let pos = label_from as i64 - k as i64 + j as i64;
            slots.push(if pos >= 0 { Some(pos as usize) } else { None });
        }
        windows.push(WindowSample {
            patient,
            slots,
            real_count: label_from.min(k),
            label_from,
        });
    }
    windows
}

/// Writes windows as text referencing admission ids: one row per window,
/// dummy slots as `-`.
pub fn write_windows(
    path: &Path,
    records: &[PatientRecord],
    windows: &[WindowSample],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# patient_id\tlabel_admission_id\treal_count\tslots")?;
    for w in windows {
        let record = &records[w.patient];
        let slots: Vec<String> = w
            .slots
            .iter()
            .map(|s| match s {
                Some(i) => record.admissions[*i].admission_id.clone(),
                None => "-".to_string(),
            })
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            record.patient_id,
            record.admissions[w.label_from].admission_id,
            w.real_count,
            slots.join(",")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Admission;

    fn record_with(patient_id: &str, n: usize, positive: &[usize]) -> PatientRecord {
        let admissions = (0..n)
            .map(|i| Admission {
                patient_id: patient_id.to_string(),
                admission_id: format!("{patient_id}-a{i}"),
                admit_time: (i as i64) * 40 * 86400,
                discharge_time: (i as i64) * 40 * 86400 + 86400,
                duration_days: 1.0,
                days_since_prior: (i > 0).then_some(39.0),
                diag_codes: vec![i + 1],
                proc_codes: Vec::new(),
                med_codes: Vec::new(),
                note_chunk_ids: Vec::new(),
                readmitted_30d: positive.contains(&i),
                next_diag_multihot: (i + 1 < n).then(|| vec![i + 2]),
            })
            .collect();
        PatientRecord {
            patient_id: patient_id.to_string(),
            admissions,
        }
    }

    fn cohort(n_pos: usize, n_neg: usize) -> Vec<PatientRecord> {
        let mut records = Vec::new();
        for i in 0..n_pos {
            records.push(record_with(&format!("pos{i:04}"), 2, &[0]));
        }
        for i in 0..n_neg {
            records.push(record_with(&format!("neg{i:04}"), 1, &[]));
        }
        records
    }

    #[test]
    fn folds_are_stratified_within_one() {
        let records = cohort(23, 104);
        let plan = stratified_patient_folds(&records, 10, 7).unwrap();
        let mut pos_counts = vec![0usize; 10];
        let mut neg_counts = vec![0usize; 10];
        for r in &records {
            let f = plan.fold_of(&r.patient_id).unwrap();
            if r.has_positive_readmission() {
                pos_counts[f] += 1;
            } else {
                neg_counts[f] += 1;
            }
        }
        assert_eq!(pos_counts.iter().sum::<usize>(), 23);
        assert_eq!(neg_counts.iter().sum::<usize>(), 104);
        assert!(pos_counts.iter().max().unwrap() - pos_counts.iter().min().unwrap() <= 1);
        assert!(neg_counts.iter().max().unwrap() - neg_counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn too_few_patients_is_an_error() {
        let records = cohort(1, 3);
        assert!(stratified_patient_folds(&records, 10, 7).is_err());
    }

    #[test]
    fn same_seed_same_plan() {
        let records = cohort(11, 31);
        let a = stratified_patient_folds(&records, 10, 99).unwrap();
        let b = stratified_patient_folds(&records, 10, 99).unwrap();
        for r in &records {
            assert_eq!(a.fold_of(&r.patient_id), b.fold_of(&r.patient_id));
        }
        let c = stratified_patient_folds(&records, 10, 100).unwrap();
        let moved = records
            .iter()
            .filter(|r| a.fold_of(&r.patient_id) != c.fold_of(&r.patient_id))
            .count();
        assert!(moved > 0, "different seed should reshuffle");
    }

    #[test]
    fn plan_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("folds.tsv");
        let records = cohort(5, 20);
        let plan = stratified_patient_folds(&records, 5, 3).unwrap();
        plan.write(&path).unwrap();
        let back = FoldPlan::read(&path).unwrap();
        assert_eq!(back.seed, 3);
        assert_eq!(back.n_folds, 5);
        for r in &records {
            assert_eq!(back.fold_of(&r.patient_id), plan.fold_of(&r.patient_id));
        }
    }

    #[test]
    fn expansion_keeps_patients_whole() {
        let records = cohort(6, 14);
        let plan = stratified_patient_folds(&records, 4, 1).unwrap();
        let folds = expand_and_shuffle(&plan, &records, 2).unwrap();
        for (f, fold) in folds.iter().enumerate() {
            for r in fold {
                let patient = &records[r.patient].patient_id;
                assert_eq!(plan.fold_of(patient), Some(f));
            }
        }
        let total: usize = folds.iter().map(|f| f.len()).sum();
        assert_eq!(total, records.iter().map(|r| r.n_admissions()).sum::<usize>());
    }

    #[test]
    fn subsampling_balances_to_positive_count() {
        let records = cohort(20, 100);
        let refs: Vec<AdmissionRef> = (0..records.len())
            .flat_map(|patient| {
                (0..records[patient].admissions.len()).map(move |index| AdmissionRef {
                    patient,
                    index,
                })
            })
            .collect();
        let balanced = subsample_negatives(&refs, &records, 5).unwrap();
        let pos = balanced
            .iter()
            .filter(|r| r.admission(&records).readmitted_30d)
            .count();
        let neg = balanced.len() - pos;
        assert_eq!(pos, 20);
        assert_eq!(neg, 20);
    }

    #[test]
    fn subsampling_keeps_scarce_negatives() {
        // 20 positive patients with 2 admissions each: 20 positive + 20
        // negative admissions; drop most negatives via refs selection.
        let records = cohort(20, 5);
        let mut refs = Vec::new();
        for (patient, r) in records.iter().enumerate() {
            for (index, adm) in r.admissions.iter().enumerate() {
                if adm.readmitted_30d || patient >= 20 {
                    refs.push(AdmissionRef { patient, index });
                }
            }
        }
        let balanced = subsample_negatives(&refs, &records, 5).unwrap();
        let pos = balanced
            .iter()
            .filter(|r| r.admission(&records).readmitted_30d)
            .count();
        assert_eq!(pos, 20);
        assert_eq!(balanced.len(), 25);
    }

    #[test]
    fn subsampling_requires_positives() {
        let records = cohort(0, 10);
        let refs: Vec<AdmissionRef> = (0..10)
            .map(|patient| AdmissionRef { patient, index: 0 })
            .collect();
        assert!(subsample_negatives(&refs, &records, 5).is_err());
    }

    #[test]
    fn rotation_uses_next_fold_for_validation() {
        let s = SplitSpec::rotation(3, 10);
        assert_eq!(s.test, 3);
        assert_eq!(s.val, 4);
        assert_eq!(s.train, vec![0, 1, 2, 5, 6, 7, 8, 9]);
        let wrap = SplitSpec::rotation(9, 10);
        assert_eq!(wrap.val, 0);
        assert_eq!(wrap.train.len(), 8);
    }

    #[test]
    fn windows_enumerate_every_label_position() {
        // Four admissions, k = 2: the two full windows from the sliding
        // scan plus the padded head window.
        let record = record_with("p", 4, &[]);
        let windows = build_windows(0, &record, 2);
        assert_eq!(windows.len(), 3);
        assert_eq!(windows[0].slots, vec![None, Some(0)]);
        assert_eq!(windows[0].label_from, 1);
        assert_eq!(windows[1].slots, vec![Some(0), Some(1)]);
        assert_eq!(windows[1].label_from, 2);
        assert_eq!(windows[2].slots, vec![Some(1), Some(2)]);
        assert_eq!(windows[2].label_from, 3);
    }

    #[test]
    fn windows_pad_short_histories_in_front() {
        let record = record_with("p", 3, &[]);
        let windows = build_windows(0, &record, 3);
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].slots, vec![None, None, Some(0)]);
        assert_eq!(windows[0].real_count, 1);
        assert_eq!(windows[1].slots, vec![None, Some(0), Some(1)]);
        assert_eq!(windows[1].real_count, 2);

        let two = record_with("p", 2, &[]);
        let w = build_windows(0, &two, 3);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].slots, vec![None, None, Some(0)]);
    }

    #[test]
    fn single_admission_patients_yield_no_windows() {
        let record = record_with("p", 1, &[]);
        assert!(build_windows(0, &record, 3).is_empty());
    }

    #[test]
    fn window_causality_and_shape() {
        for m in 2..=10 {
            let record = record_with("p", m, &[]);
            for k in [2usize, 3, 6] {
                let windows = build_windows(0, &record, k);
                assert_eq!(windows.len(), m - 1);
                for w in windows {
                    assert_eq!(w.slots.len(), k);
                    // Dummies only in front, last slot real.
                    let first_real = w.slots.iter().position(|s| s.is_some()).unwrap();
                    assert!(w.slots[first_real..].iter().all(|s| s.is_some()));
                    assert!(w.slots.last().unwrap().is_some());
                    assert_eq!(w.slots.iter().filter(|s| s.is_some()).count(), w.real_count);
                    // Causality: window strictly precedes the label source.
                    for s in w.slots.iter().flatten() {
                        assert!(*s < w.label_from);
                    }
                    assert_eq!(w.last_real() + 1, w.label_from);
                }
            }
        }
    }
}
