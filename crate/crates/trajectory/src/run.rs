//! Pipeline drivers behind the command-line verbs: cohort synthesis, table
//! preparation, cross-validated training, representation export, and report
//! summaries. Each driver reads and writes a fixed layout under the
//! configured output directory so the verbs compose across processes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::admission::{
    self, AdmissionModel, AdmissionScores, EmbeddingSet, FeaturePrep, PathDims,
};
use crate::checkpoint::Checkpoint;
use crate::codes::{CodeSystem, CodeVocabulary, MappingTable, RolledSystem};
use crate::config::{Architecture, CodeSpace, ExperimentConfig, FoldMode, SequenceInput, Task};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport};
use crate::folds::{self, AdmissionRef, FoldPlan, SplitSpec};
use crate::ingest::{self, tables, CodeKind, PatientRecord, TemporalRescaler};
use crate::nn::{FrozenEmbedding, ParamStore};
use crate::rng;
use crate::sequence::{self, StepInputs};
use crate::store::VectorStore;
use crate::synth::{self, SynthOutput};

/// Caps the rayon pool; call once, before any parallel work.
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn task_tag(task: Task) -> &'static str {
    match task {
        Task::Readmission => "readmission",
        Task::DiagnosisIcd9 => "diagnosis_icd9",
        Task::DiagnosisCcs => "diagnosis_ccs",
    }
}

pub fn arch_tag(arch: Architecture) -> &'static str {
    match arch {
        Architecture::Admission => "admission",
        Architecture::Sequence => "sequence",
    }
}

fn prepared_dir(config: &ExperimentConfig) -> PathBuf {
    config.paths.out_dir.join("prepared")
}

pub fn records_path(config: &ExperimentConfig) -> PathBuf {
    prepared_dir(config).join("records.jsonl")
}

fn vocab_path(config: &ExperimentConfig, stem: &str) -> PathBuf {
    prepared_dir(config).join(format!("{stem}.vocab"))
}

pub fn checkpoint_path(config: &ExperimentConfig, arch: Architecture, fold: usize) -> PathBuf {
    config
        .paths
        .out_dir
        .join("checkpoints")
        .join(format!("{}_fold{fold}.ckpt", arch_tag(arch)))
}

pub fn reports_path(config: &ExperimentConfig) -> PathBuf {
    config.paths.out_dir.join("reports").join(format!(
        "{}_{}.jsonl",
        task_tag(config.experiment.task),
        arch_tag(config.experiment.architecture)
    ))
}

pub fn representations_path(config: &ExperimentConfig, fold: usize) -> PathBuf {
    config
        .paths
        .out_dir
        .join("representations")
        .join(format!("fold{fold}.vstore"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes the synthetic cohort into the configured data directory.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<SynthOutput> {
    let out = synth::generate(&config.synth, config.experiment.seed, &config.paths.data_dir)?;
    log::info!(
        "synthesized {} patients, {} admissions, {} positive",
        out.n_patients,
        out.n_admissions,
        out.n_positive_admissions
    );
    Ok(out)
}

#[derive(Debug)]
pub struct PrepareSummary {
    pub n_patients: usize,
    pub n_admissions: usize,
    pub n_positive: usize,
    pub diag_vocab_codes: usize,
    pub dropped_codes: usize,
    pub out_of_vocab: usize,
    pub records_path: PathBuf,
}

fn load_or_build_vocab(
    universe: Option<&Path>,
    rolled: &HashMap<String, Vec<String>>,
    what: &str,
) -> Result<CodeVocabulary> {
    match universe {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "{what} universe file {} does not exist",
                    path.display()
                )));
            }
            CodeVocabulary::read(path)
        }
        None => {
            log::warn!("no {what} universe file configured; building from observed codes");
            let mut codes: Vec<&String> = rolled.values().flatten().collect();
            codes.sort();
            codes.dedup();
            Ok(CodeVocabulary::build(codes.into_iter().cloned()))
        }
    }
}

fn require<'a>(path: Option<&'a PathBuf>, what: &str) -> Result<&'a PathBuf> {
    path.ok_or_else(|| Error::Config(format!("{what} is required but not configured")))
}

/// Reads the raw tables, attaches codes, temporal features and labels, and
/// writes one prepared record file plus vocabulary snapshots.
pub fn cmd_prepare(config: &ExperimentConfig) -> Result<PrepareSummary> {
    let tables_dir = config.paths.data_dir.join("tables");
    let admissions_csv = tables_dir.join("ADMISSIONS.csv");
    if !admissions_csv.exists() {
        return Err(Error::Config(format!(
            "{} does not exist; run synth first or point data_dir at real tables",
            admissions_csv.display()
        )));
    }

    let rows = tables::read_admissions(&admissions_csv)?;
    let mut records = ingest::group_into_patients(rows)?;
    for record in &mut records {
        ingest::compute_temporal_features(record)?;
        ingest::label_readmission(record);
    }

    let mut dropped_codes = 0usize;
    let mut out_of_vocab = 0usize;

    // Diagnosis codes feed every task: inputs, multi-hot windows and the
    // future-diagnosis labels.
    let diag_rows = tables::read_code_table(&tables_dir.join("DIAGNOSES_ICD.csv"))?;
    let crosswalk = match config.features.code_space {
        CodeSpace::Ccs => {
            let path = require(config.paths.diag_ccs_crosswalk.as_ref(), "diag_ccs_crosswalk")?;
            Some(MappingTable::read(path, RolledSystem::CcsDiag)?)
        }
        CodeSpace::Icd9Parent => None,
    };
    let (diag_rolled, n) =
        ingest::roll_code_rows(&diag_rows, CodeSystem::Icd9Diag, crosswalk.as_ref());
    dropped_codes += n;
    let diag_vocab = load_or_build_vocab(
        config.paths.diag_universe.as_deref(),
        &diag_rolled,
        "diagnosis",
    )?;
    if diag_vocab.n_codes() == 0 {
        return Err(Error::Integrity("diagnosis vocabulary is empty".into()));
    }
    out_of_vocab += ingest::attach_code_indices(&mut records, &diag_rolled, &diag_vocab, CodeKind::Diag);

    let mut proc_vocab = None;
    if config.features.use_proc {
        let proc_rows = tables::read_code_table(&tables_dir.join("PROCEDURES_ICD.csv"))?;
        let (proc_rolled, n) = ingest::roll_code_rows(&proc_rows, CodeSystem::Icd9Proc, None);
        dropped_codes += n;
        let vocab = load_or_build_vocab(
            config.paths.proc_universe.as_deref(),
            &proc_rolled,
            "procedure",
        )?;
        out_of_vocab += ingest::attach_code_indices(&mut records, &proc_rolled, &vocab, CodeKind::Proc);
        proc_vocab = Some(vocab);
    }

    let mut med_vocab = None;
    if config.features.use_med {
        let med_rows = tables::read_prescriptions(&tables_dir.join("PRESCRIPTIONS.csv"))?;
        let path = require(config.paths.ndc_cui_crosswalk.as_ref(), "ndc_cui_crosswalk")?;
        let ndc_cui = MappingTable::read(path, RolledSystem::Cui)?;
        let (med_rolled, n) = ingest::roll_prescription_rows(&med_rows, &ndc_cui);
        dropped_codes += n;
        let vocab = load_or_build_vocab(
            config.paths.med_universe.as_deref(),
            &med_rolled,
            "medication",
        )?;
        out_of_vocab += ingest::attach_code_indices(&mut records, &med_rolled, &vocab, CodeKind::Med);
        med_vocab = Some(vocab);
    }

    for record in &mut records {
        ingest::label_future_diagnoses(record);
    }

    if config.features.use_text {
        let store_path = require(config.paths.chunk_store.as_ref(), "chunk_store")?;
        let chunks = ingest::load_chunk_store(store_path)?;
        let manifest = tables::read_chunk_manifest(&store_path.with_extension("manifest"))?;
        ingest::attach_note_chunks(&mut records, &manifest, &chunks)?;
    }

    let records_file = records_path(config);
    ensure_parent(&records_file)?;
    ingest::write_records(&records_file, &records)?;
    diag_vocab.write(&vocab_path(config, "diag"))?;
    if let Some(v) = &proc_vocab {
        v.write(&vocab_path(config, "proc"))?;
    }
    if let Some(v) = &med_vocab {
        v.write(&vocab_path(config, "med"))?;
    }

    let n_admissions = records.iter().map(|r| r.admissions.len()).sum();
    let n_positive = records
        .iter()
        .flat_map(|r| &r.admissions)
        .filter(|a| a.readmitted_30d)
        .count();
    let summary = PrepareSummary {
        n_patients: records.len(),
        n_admissions,
        n_positive,
        diag_vocab_codes: diag_vocab.n_codes(),
        dropped_codes,
        out_of_vocab,
        records_path: records_file,
    };
    log::info!(
        "prepared {} patients / {} admissions ({} positive), {} diagnosis codes",
        summary.n_patients,
        summary.n_admissions,
        summary.n_positive,
        summary.diag_vocab_codes
    );
    Ok(summary)
}

pub struct LoadedData {
    pub records: Vec<PatientRecord>,
    pub diag_vocab: CodeVocabulary,
    pub proc_vocab: Option<CodeVocabulary>,
    pub med_vocab: Option<CodeVocabulary>,
}

pub fn load_prepared(config: &ExperimentConfig) -> Result<LoadedData> {
    let records_file = records_path(config);
    if !records_file.exists() {
        return Err(Error::Config(format!(
            "{} does not exist; run prepare first",
            records_file.display()
        )));
    }
    let records = ingest::read_records(&records_file)?;
    let diag_vocab = CodeVocabulary::read(&vocab_path(config, "diag"))?;
    let proc_vocab = config
        .features
        .use_proc
        .then(|| CodeVocabulary::read(&vocab_path(config, "proc")))
        .transpose()?;
    let med_vocab = config
        .features
        .use_med
        .then(|| CodeVocabulary::read(&vocab_path(config, "med")))
        .transpose()?;
    Ok(LoadedData {
        records,
        diag_vocab,
        proc_vocab,
        med_vocab,
    })
}

/// Loads frozen code embeddings for every enabled code feature.
pub fn load_embeddings(config: &ExperimentConfig, data: &LoadedData) -> Result<EmbeddingSet<f32>> {
    let f = &config.features;
    let mut set = EmbeddingSet::default();
    if !(f.use_diag || f.use_proc || f.use_med) {
        return Ok(set);
    }
    let path = require(config.paths.code_embedding_store.as_ref(), "code_embedding_store")?;
    let store = VectorStore::read(path)?;
    if f.use_diag {
        set.diag = Some(FrozenEmbedding::from_store(&store, &data.diag_vocab)?);
    }
    if f.use_proc {
        let vocab = data.proc_vocab.as_ref().ok_or_else(|| {
            Error::Config("procedure features enabled but no vocabulary was prepared".into())
        })?;
        set.proc = Some(FrozenEmbedding::from_store(&store, vocab)?);
    }
    if f.use_med {
        let vocab = data.med_vocab.as_ref().ok_or_else(|| {
            Error::Config("medication features enabled but no vocabulary was prepared".into())
        })?;
        set.med = Some(FrozenEmbedding::from_store(&store, vocab)?);
    }
    Ok(set)
}

fn n_task_classes(config: &ExperimentConfig, data: &LoadedData) -> usize {
    match config.experiment.task {
        Task::Readmission => 1,
        Task::DiagnosisIcd9 | Task::DiagnosisCcs => data.diag_vocab.n_codes(),
    }
}

/// Per-fold admission lists under the configured fold policy.
fn build_fold_lists(
    config: &ExperimentConfig,
    records: &[PatientRecord],
) -> Result<(Option<FoldPlan>, Vec<Vec<AdmissionRef>>)> {
    let n_folds = config.experiment.n_folds;
    let seed = config.experiment.seed;
    match config.experiment.fold_mode {
        FoldMode::Patient => {
            let plan = folds::stratified_patient_folds(records, n_folds, seed)?;
            let lists = folds::expand_and_shuffle(&plan, records, seed)?;
            Ok((Some(plan), lists))
        }
        FoldMode::AdmissionLeaky => {
            Ok((None, folds::admission_level_folds(records, n_folds, seed)?))
        }
    }
}

#[derive(Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub best_val_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub reports_path: PathBuf,
    pub reports: Vec<MetricsReport>,
    pub outcomes: Vec<FoldOutcome>,
}

fn report_from_admission_scores(
    config: &ExperimentConfig,
    fold: usize,
    fingerprint: &str,
    scores: &AdmissionScores,
) -> MetricsReport {
    let task = config.experiment.task;
    match task {
        Task::Readmission => {
            let flat: Vec<f64> = scores.scores.iter().map(|row| row[0]).collect();
            MetricsReport::binary(task_tag(task), fold, fingerprint, &flat, &scores.binary_labels)
        }
        Task::DiagnosisIcd9 | Task::DiagnosisCcs => MetricsReport::multilabel(
            task_tag(task),
            fold,
            fingerprint,
            &scores.scores,
            &scores.multihot_labels,
        ),
    }
}

fn rescaler_extras(ckpt: &mut Checkpoint, prep: &FeaturePrep, n_classes: usize) {
    let mut put = |name: &str, r: &TemporalRescaler| {
        ckpt.extras.insert(format!("rescaler.{name}.min"), r.min);
        ckpt.extras.insert(format!("rescaler.{name}.max"), r.max);
        ckpt.extras
            .insert(format!("rescaler.{name}.degenerate"), r.degenerate as u8 as f64);
    };
    put("duration", &prep.duration);
    put("days", &prep.days);
    ckpt.extras.insert("n_classes".into(), n_classes as f64);
}

fn prep_from_extras(ckpt: &Checkpoint) -> Result<FeaturePrep> {
    let get = |name: &str| {
        ckpt.extras
            .get(name)
            .copied()
            .ok_or_else(|| Error::Format(format!("checkpoint lacks extra {name}")))
    };
    let read = |name: &str| -> Result<TemporalRescaler> {
        Ok(TemporalRescaler {
            min: get(&format!("rescaler.{name}.min"))?,
            max: get(&format!("rescaler.{name}.max"))?,
            degenerate: get(&format!("rescaler.{name}.degenerate"))? != 0.0,
        })
    };
    Ok(FeaturePrep {
        duration: read("duration")?,
        days: read("days")?,
    })
}

fn classes_from_extras(ckpt: &Checkpoint) -> Result<usize> {
    ckpt.extras
        .get("n_classes")
        .map(|&v| v as usize)
        .ok_or_else(|| Error::Format("checkpoint lacks extra n_classes".into()))
}

fn train_admission_all_folds(config: &ExperimentConfig) -> Result<TrainOutput> {
    let data = load_prepared(config)?;
    let embeddings = load_embeddings(config, &data)?;
    let chunks = if config.features.use_text {
        let path = require(config.paths.chunk_store.as_ref(), "chunk_store")?;
        Some(ingest::load_chunk_store(path)?)
    } else {
        None
    };
    let n_classes = n_task_classes(config, &data);
    let (_, fold_lists) = build_fold_lists(config, &data.records)?;
    let fingerprint = config.fingerprint();

    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for test in 0..config.experiment.n_folds {
        let split = SplitSpec::rotation(test, config.experiment.n_folds);
        let (trained, scores) = admission::train_admission_model(
            config,
            &data.records,
            &fold_lists,
            &split,
            n_classes,
            &embeddings,
            chunks.as_ref(),
        )?;
        reports.push(report_from_admission_scores(config, test, &fingerprint, &scores));

        let ckpt_path = checkpoint_path(config, Architecture::Admission, test);
        ensure_parent(&ckpt_path)?;
        let mut ckpt = Checkpoint::capture(&trained.store, None, &fingerprint);
        rescaler_extras(&mut ckpt, &trained.prep, n_classes);
        ckpt.write(&ckpt_path)?;

        log::info!(
            "fold {test}: {} epochs, best val loss {:.5}{}",
            trained.log.epochs_run,
            trained.log.best_val_loss,
            if trained.log.early_stopped { ", stopped early" } else { "" }
        );
        outcomes.push(FoldOutcome {
            fold: test,
            epochs_run: trained.log.epochs_run,
            early_stopped: trained.log.early_stopped,
            best_val_loss: trained.log.best_val_loss,
        });
    }

    let path = reports_path(config);
    ensure_parent(&path)?;
    eval::write_reports(&path, &reports)?;
    Ok(TrainOutput {
        reports_path: path,
        reports,
        outcomes,
    })
}

/// Rebuilds the trained admission encoder of one fold from its checkpoint.
fn rebuild_admission(
    config: &ExperimentConfig,
    fold: usize,
    embeddings: &EmbeddingSet<f32>,
    expected_fingerprint: Option<&str>,
) -> Result<(AdmissionModel, ParamStore<f32>, FeaturePrep)> {
    let path = checkpoint_path(config, Architecture::Admission, fold);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} does not exist; train the admission model first",
            path.display()
        )));
    }
    let ckpt = Checkpoint::read(&path)?;
    let n_classes = classes_from_extras(&ckpt)?;
    let mut store = ParamStore::new();
    let mut init_rng = rng::stream(config.experiment.seed, "adm-init", fold as u64);
    let model = AdmissionModel::init(
        &mut store,
        &mut init_rng,
        &config.features,
        n_classes,
        PathDims::from_embeddings(embeddings),
    );
    match expected_fingerprint {
        Some(fp) => ckpt.apply(&mut store, fp)?,
        // Cross-architecture load: the caller trusts the checkpoint, name
        // and shape checks still apply.
        None => {
            log::info!(
                "loading upstream encoder (fingerprint {}) for fold {fold}",
                ckpt.fingerprint
            );
            ckpt.apply(&mut store, &ckpt.fingerprint)?;
        }
    }
    let prep = prep_from_extras(&ckpt)?;
    Ok((model, store, prep))
}

/// Exports per-admission representations for every fold's trained encoder.
pub fn cmd_export_reprs(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = load_prepared(config)?;
    let embeddings = load_embeddings(config, &data)?;
    let fingerprint = config.fingerprint();
    let mut paths = Vec::new();
    for fold in 0..config.experiment.n_folds {
        let (model, store, prep) =
            rebuild_admission(config, fold, &embeddings, Some(&fingerprint))?;
        let reprs =
            admission::export_representations(&model, &store, &prep, &data.records, &embeddings)?;
        let path = representations_path(config, fold);
        ensure_parent(&path)?;
        reprs.write(&path)?;
        log::info!("fold {fold}: exported {} representations", reprs.len());
        paths.push(path);
    }
    Ok(paths)
}

fn train_sequence_all_folds(config: &ExperimentConfig) -> Result<TrainOutput> {
    if config.experiment.fold_mode != FoldMode::Patient {
        return Err(Error::Config(
            "window models need patient-level folds; admission_leaky would leak \
             history across splits"
                .into(),
        ));
    }
    let data = load_prepared(config)?;
    let plan = folds::stratified_patient_folds(
        &data.records,
        config.experiment.n_folds,
        config.experiment.seed,
    )?;
    let n_classes = n_task_classes(config, &data);
    let fingerprint = config.fingerprint();

    // Embeddings are only pulled in when the upstream encoder runs inline.
    let embeddings = if config.sequence.finetune_upstream {
        load_embeddings(config, &data)?
    } else {
        EmbeddingSet::default()
    };

    let mut reports = Vec::new();
    let mut outcomes = Vec::new();
    for test in 0..config.experiment.n_folds {
        let split = SplitSpec::rotation(test, config.experiment.n_folds);
        let (trained, scores) = match config.sequence.input {
            SequenceInput::MultiHot => {
                let inputs = StepInputs::MultiHot {
                    n_codes: data.diag_vocab.n_codes(),
                };
                sequence::train_sequence_model_with_classes(
                    config,
                    &data.records,
                    &plan,
                    &split,
                    &inputs,
                    None,
                    n_classes,
                )?
            }
            SequenceInput::DenseRepresentation => {
                if config.sequence.finetune_upstream {
                    let (model, store, prep) = rebuild_admission(config, test, &embeddings, None)?;
                    let inputs = StepInputs::Finetune {
                        model: &model,
                        prep: &prep,
                        embeddings: &embeddings,
                    };
                    sequence::train_sequence_model_with_classes(
                        config,
                        &data.records,
                        &plan,
                        &split,
                        &inputs,
                        Some(&store),
                        n_classes,
                    )?
                } else {
                    let path = representations_path(config, test);
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "{} does not exist; run export-reprs first",
                            path.display()
                        )));
                    }
                    let reprs = VectorStore::read(&path)?;
                    let inputs = StepInputs::Dense(&reprs);
                    sequence::train_sequence_model_with_classes(
                        config,
                        &data.records,
                        &plan,
                        &split,
                        &inputs,
                        None,
                        n_classes,
                    )?
                }
            }
        };

        let task = config.experiment.task;
        let report = match task {
            Task::Readmission => {
                let flat: Vec<f64> = scores.scores.iter().map(|row| row[0]).collect();
                MetricsReport::binary(task_tag(task), test, &fingerprint, &flat, &scores.binary_labels)
            }
            Task::DiagnosisIcd9 | Task::DiagnosisCcs => MetricsReport::multilabel(
                task_tag(task),
                test,
                &fingerprint,
                &scores.scores,
                &scores.multihot_labels,
            ),
        };
        reports.push(report);

        let ckpt_path = checkpoint_path(config, Architecture::Sequence, test);
        ensure_parent(&ckpt_path)?;
        Checkpoint::capture(&trained.store, None, &fingerprint).write(&ckpt_path)?;

        log::info!(
            "fold {test}: {} epochs, best val loss {:.5}{}",
            trained.log.epochs_run,
            trained.log.best_val_loss,
            if trained.log.early_stopped { ", stopped early" } else { "" }
        );
        outcomes.push(FoldOutcome {
            fold: test,
            epochs_run: trained.log.epochs_run,
            early_stopped: trained.log.early_stopped,
            best_val_loss: trained.log.best_val_loss,
        });
    }

    let path = reports_path(config);
    ensure_parent(&path)?;
    eval::write_reports(&path, &reports)?;
    Ok(TrainOutput {
        reports_path: path,
        reports,
        outcomes,
    })
}

/// Cross-validated training under the configured architecture.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutput> {
    match config.experiment.architecture {
        Architecture::Admission => train_admission_all_folds(config),
        Architecture::Sequence => train_sequence_all_folds(config),
    }
}

/// Renders the cross-fold summary of the current task's report file.
pub fn cmd_report(config: &ExperimentConfig) -> Result<String> {
    let path = reports_path(config);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} does not exist; run train first",
            path.display()
        )));
    }
    let reports = eval::read_reports(&path)?;
    let mut out = format!(
        "{} / {}: {} folds\n",
        task_tag(config.experiment.task),
        arch_tag(config.experiment.architecture),
        reports.len()
    );
    type Metric = (&'static str, fn(&MetricsReport) -> Option<f64>);
    let metrics: [Metric; 9] = [
        ("roc_auc", |r| r.roc_auc),
        ("au_pr", |r| r.au_pr),
        ("rp80", |r| r.rp80),
        ("recall@10", |r| r.recall_at_10),
        ("recall@20", |r| r.recall_at_20),
        ("recall@30", |r| r.recall_at_30),
        ("precision", |r| r.threshold.as_ref().map(|t| t.precision)),
        ("recall", |r| r.threshold.as_ref().map(|t| t.recall)),
        ("f1", |r| r.threshold.as_ref().map(|t| t.f1)),
    ];
    for (name, metric) in metrics {
        if let Some(s) = eval::summarize(&reports, metric) {
            out.push_str(&format!(
                "  {name:<10} {:.4} +/- {:.4} (n={})\n",
                s.mean, s.std, s.n_folds
            ));
        }
    }
    Ok(out)
}
