//! Recurrent model over fixed-length admission windows. Step inputs are
//! either multi-hot diagnosis vectors, fixed representations exported by a
//! trained admission encoder, or that encoder run inline so its weights
//! keep training with the recurrent stack.

use rand_chacha::ChaCha8Rng;

use crate::admission::{AdmissionModel, EmbeddingSet, FeaturePrep, SampleRef};
use crate::config::{ExperimentConfig, SequenceInput, Task};
use crate::error::{Error, Result};
use crate::folds::{build_windows, AdmissionRef, FoldPlan, SplitSpec, WindowSample};
use crate::ingest::PatientRecord;
use crate::nn::{
    NodeId, Optimizer, ParamId, ParamStore, RecurrentStack, Scalar, Tape, Tensor2D,
};
use crate::rng;
use crate::store::VectorStore;

/// Where the per-step vectors come from.
pub enum StepInputs<'a> {
    /// Multi-hot over the diagnosis vocabulary (pad excluded).
    MultiHot { n_codes: usize },
    /// Fixed representations keyed by admission id.
    Dense(&'a VectorStore),
    /// Admission encoder composed into the graph; its parameters must
    /// already live in the training store.
    Finetune {
        model: &'a AdmissionModel,
        prep: &'a FeaturePrep,
        embeddings: &'a EmbeddingSet<f32>,
    },
}

impl StepInputs<'_> {
    pub fn dim(&self) -> usize {
        match self {
            StepInputs::MultiHot { n_codes } => *n_codes,
            StepInputs::Dense(store) => store.dim(),
            StepInputs::Finetune { model, .. } => crate::admission::repr_dim(&model.features),
        }
    }

    pub fn kind(&self) -> SequenceInput {
        match self {
            StepInputs::MultiHot { .. } => SequenceInput::MultiHot,
            StepInputs::Dense(_) | StepInputs::Finetune { .. } => {
                SequenceInput::DenseRepresentation
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceModel {
    pub stack: RecurrentStack,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub input_dim: usize,
    pub n_classes: usize,
}

impl SequenceModel {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        section: &crate::config::SequenceSection,
        input_dim: usize,
        n_classes: usize,
    ) -> Self {
        let stack = RecurrentStack::init(
            store,
            rng,
            "seq.rnn",
            section.cell,
            input_dim,
            section.hidden,
            section.layers,
            section.bidirectional,
            section.dropout,
        );
        let head_w = store.add_weight("seq.head.w", stack.output_dim(), n_classes, rng);
        let head_b = store.add_zeros("seq.head.b", 1, n_classes);
        SequenceModel {
            stack,
            head_w,
            head_b,
            input_dim,
            n_classes,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        steps: &[NodeId],
        masks: &[Tensor2D<F>],
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let feature = self.stack.forward(tape, store, steps, masks, rng);
        let w = tape.param(store, self.head_w);
        let b = tape.param(store, self.head_b);
        let logits = tape.matmul(feature, w);
        let logits = tape.add_bias(logits, b);
        tape.sigmoid(logits)
    }
}

/// Per-step validity masks for a window batch.
fn step_masks(batch: &[&WindowSample], k: usize) -> Vec<Tensor2D<f32>> {
    (0..k)
        .map(|t| {
            let mut m = Tensor2D::zeros(batch.len(), 1);
            for (b, w) in batch.iter().enumerate() {
                if w.slots[t].is_some() {
                    m.set(b, 0, 1.0);
                }
            }
            m
        })
        .collect()
}

/// Builds the k step nodes plus masks for one batch of windows. Padded
/// slots carry a stand-in row; the mask keeps it out of the recurrence.
fn build_steps(
    tape: &mut Tape<f32>,
    store: &ParamStore<f32>,
    inputs: &StepInputs,
    records: &[PatientRecord],
    batch: &[&WindowSample],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<NodeId>, Vec<Tensor2D<f32>>)> {
    let masks = step_masks(batch, k);
    let mut steps = Vec::with_capacity(k);
    for t in 0..k {
        let node = match inputs {
            StepInputs::MultiHot { n_codes } => {
                let mut x = Tensor2D::zeros(batch.len(), *n_codes);
                for (b, w) in batch.iter().enumerate() {
                    if let Some(idx) = w.slots[t] {
                        for &code in &records[w.patient].admissions[idx].diag_codes {
                            x.set(b, code - 1, 1.0);
                        }
                    }
                }
                tape.input(x)
            }
            StepInputs::Dense(reprs) => {
                let mut x = Tensor2D::zeros(batch.len(), reprs.dim());
                for (b, w) in batch.iter().enumerate() {
                    if let Some(idx) = w.slots[t] {
                        let id = &records[w.patient].admissions[idx].admission_id;
                        let vec = reprs.get(id).ok_or_else(|| {
                            Error::Integrity(format!(
                                "admission {id} missing from the representation store"
                            ))
                        })?;
                        for (j, &v) in vec.iter().enumerate() {
                            x.set(b, j, v);
                        }
                    }
                }
                tape.input(x)
            }
            StepInputs::Finetune {
                model,
                prep,
                embeddings,
            } => {
                let samples: Vec<SampleRef> = batch
                    .iter()
                    .map(|w| SampleRef {
                        adm: AdmissionRef {
                            patient: w.patient,
                            // Stand-in for padded slots; masked out below.
                            index: w.slots[t].unwrap_or(w.last_real()),
                        },
                        chunk: None,
                    })
                    .collect();
                let batch_inputs =
                    prep.build_inputs(&model.features, records, &samples, embeddings, None)?;
                model.encode(tape, store, &batch_inputs, rng)?
            }
        };
        steps.push(node);
    }
    Ok((steps, masks))
}

/// Window label matrix: readmission within 30 days of the last real
/// admission, or the multi-hot diagnoses of the admission after the window.
pub fn build_window_targets<F: Scalar>(
    task: Task,
    n_classes: usize,
    records: &[PatientRecord],
    batch: &[&WindowSample],
) -> Tensor2D<F> {
    let mut t = Tensor2D::zeros(batch.len(), n_classes);
    for (b, w) in batch.iter().enumerate() {
        let admissions = &records[w.patient].admissions;
        match task {
            Task::Readmission => {
                if admissions[w.last_real()].readmitted_30d {
                    t.set(b, 0, F::one());
                }
            }
            Task::DiagnosisIcd9 | Task::DiagnosisCcs => {
                for &idx in &admissions[w.label_from].diag_codes {
                    t.set(b, idx - 1, F::one());
                }
            }
        }
    }
    t
}

fn window_label(records: &[PatientRecord], w: &WindowSample) -> bool {
    records[w.patient].admissions[w.last_real()].readmitted_30d
}

/// Readmission-task class balancing, mirroring the admission-level rule:
/// negatives truncated to the positive count, all kept with a warning when
/// already scarce.
pub fn subsample_negative_windows(
    windows: Vec<WindowSample>,
    records: &[PatientRecord],
    seed: u64,
) -> Result<Vec<WindowSample>> {
    use rand::seq::SliceRandom;
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for w in windows {
        if window_label(records, &w) {
            positives.push(w);
        } else {
            negatives.push(w);
        }
    }
    if positives.is_empty() {
        return Err(Error::Integrity(
            "cannot balance a window set without positive windows".into(),
        ));
    }
    let mut r = rng::stream(seed, "seq-subsample", 0);
    negatives.shuffle(&mut r);
    if negatives.len() > positives.len() {
        negatives.truncate(positives.len());
    } else {
        log::warn!(
            "negative windows already scarce ({} vs {} positives), keeping all",
            negatives.len(),
            positives.len()
        );
    }
    let mut out = positives;
    out.append(&mut negatives);
    out.shuffle(&mut r);
    Ok(out)
}

/// Windows of every patient in the given folds, in fold order.
pub fn fold_windows(
    plan: &FoldPlan,
    records: &[PatientRecord],
    patient_index: &std::collections::HashMap<&str, usize>,
    folds: &[usize],
    k: usize,
) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for &fold in folds {
        for patient_id in plan.patients_in(fold) {
            let &pi = patient_index.get(patient_id).ok_or_else(|| {
                Error::Integrity(format!("fold plan names unknown patient {patient_id}"))
            })?;
            out.extend(build_windows(pi, &records[pi], k));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLog {
    pub epochs_run: usize,
    pub steps: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
}

pub struct TrainedSequence {
    pub model: SequenceModel,
    pub store: ParamStore<f32>,
    pub log: TrainLog,
}

/// Test-fold scores, one row per window.
pub struct WindowScores {
    pub patient_ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub binary_labels: Vec<bool>,
    pub multihot_labels: Vec<Vec<bool>>,
}

const EVAL_BATCH: usize = 256;

fn eval_window_probs(
    model: &SequenceModel,
    store: &ParamStore<f32>,
    inputs: &StepInputs,
    records: &[PatientRecord],
    windows: &[WindowSample],
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(windows.len());
    let mut rng = rng::stream(0, "seq-eval-unused", 0);
    for chunk in windows.chunks(EVAL_BATCH) {
        let batch: Vec<&WindowSample> = chunk.iter().collect();
        let mut tape: Tape<f32> = Tape::new(false);
        let (steps, masks) = build_steps(&mut tape, store, inputs, records, &batch, k, &mut rng)?;
        let probs = model.forward(&mut tape, store, &steps, &masks, &mut rng);
        let value = tape.value(probs);
        for b in 0..batch.len() {
            out.push(value.row(b).iter().map(|&p| p as f64).collect());
        }
    }
    Ok(out)
}

fn collect_window_scores(
    task: Task,
    n_classes: usize,
    records: &[PatientRecord],
    windows: &[WindowSample],
    probs: Vec<Vec<f64>>,
) -> WindowScores {
    let mut scores = WindowScores {
        patient_ids: Vec::with_capacity(windows.len()),
        scores: probs,
        binary_labels: Vec::new(),
        multihot_labels: Vec::new(),
    };
    for w in windows {
        scores
            .patient_ids
            .push(records[w.patient].patient_id.clone());
        match task {
            Task::Readmission => scores.binary_labels.push(window_label(records, w)),
            Task::DiagnosisIcd9 | Task::DiagnosisCcs => {
                let mut row = vec![false; n_classes];
                for &idx in &records[w.patient].admissions[w.label_from].diag_codes {
                    row[idx - 1] = true;
                }
                scores.multihot_labels.push(row);
            }
        }
    }
    scores
}

/// Trains one cross-validation iteration of the window model and scores
/// the test fold. In finetune mode `upstream_params` seeds the training
/// store so encoder weights keep moving with the recurrent stack.
pub fn train_sequence_model(
    config: &ExperimentConfig,
    records: &[PatientRecord],
    plan: &FoldPlan,
    split: &SplitSpec,
    inputs: &StepInputs,
    upstream_params: Option<&ParamStore<f32>>,
) -> Result<(TrainedSequence, WindowScores)> {
    let n_classes = match config.experiment.task {
        Task::Readmission => 1,
        Task::DiagnosisIcd9 | Task::DiagnosisCcs => match inputs {
            StepInputs::MultiHot { n_codes } => *n_codes,
            // Dense inputs do not carry the class count; the caller passes
            // it explicitly instead.
            _ => {
                return Err(Error::Config(
                    "diagnosis windows need the multi-hot input to size the label space; \
                     use train_sequence_model_with_classes"
                        .into(),
                ))
            }
        },
    };
    train_sequence_model_with_classes(config, records, plan, split, inputs, upstream_params, n_classes)
}

pub fn train_sequence_model_with_classes(
    config: &ExperimentConfig,
    records: &[PatientRecord],
    plan: &FoldPlan,
    split: &SplitSpec,
    inputs: &StepInputs,
    upstream_params: Option<&ParamStore<f32>>,
    n_classes: usize,
) -> Result<(TrainedSequence, WindowScores)> {
    let task = config.experiment.task;
    let seed = config.experiment.seed;
    let k = config.sequence.window;
    let fold_tag = split.test as u64;

    let patient_index: std::collections::HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.patient_id.as_str(), i))
        .collect();
    let mut train_windows = fold_windows(plan, records, &patient_index, &split.train, k)?;
    let val_windows = fold_windows(plan, records, &patient_index, &[split.val], k)?;
    let test_windows = fold_windows(plan, records, &patient_index, &[split.test], k)?;
    if task == Task::Readmission && config.train.subsample_negatives {
        train_windows = subsample_negative_windows(
            train_windows,
            records,
            rng::subseed(seed, "seq-subsample-seed", fold_tag),
        )?;
    }
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Integrity(
            "a training or validation fold produced no windows".into(),
        ));
    }

    let mut store: ParamStore<f32> = match upstream_params {
        Some(p) => {
            if !matches!(inputs, StepInputs::Finetune { .. }) {
                return Err(Error::Config(
                    "upstream parameters are only used with finetune inputs".into(),
                ));
            }
            p.clone()
        }
        None => {
            if matches!(inputs, StepInputs::Finetune { .. }) {
                return Err(Error::Config(
                    "finetune inputs need the upstream parameter store".into(),
                ));
            }
            ParamStore::new()
        }
    };
    let mut init_rng = rng::stream(seed, "seq-init", fold_tag);
    let model = SequenceModel::init(&mut store, &mut init_rng, &config.sequence, inputs.dim(), n_classes);
    let mut optimizer = Optimizer::new(&store, config.optimizer_config());

    let val_refs: Vec<&WindowSample> = val_windows.iter().collect();
    let val_targets: Tensor2D<f32> = build_window_targets(task, n_classes, records, &val_refs);
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<ParamStore<f32>> = None;
    let mut steps_at_best = 0usize;
    let mut steps = 0usize;
    let mut epochs_run = 0usize;
    let mut early_stopped = false;

    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    for epoch in 0..config.sequence.max_epochs {
        epochs_run = epoch + 1;
        let epoch_tag = fold_tag << 32 | epoch as u64;
        let mut shuffle_rng = rng::stream(seed, "seq-epoch-shuffle", epoch_tag);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);
        let mut dropout_rng = rng::stream(seed, "seq-dropout", epoch_tag);

        for batch_idx in order.chunks(config.train.batch_size) {
            let batch: Vec<&WindowSample> = batch_idx.iter().map(|&i| &train_windows[i]).collect();
            let mut tape: Tape<f32> = Tape::new(true);
            let (step_nodes, masks) =
                build_steps(&mut tape, &store, inputs, records, &batch, k, &mut dropout_rng)?;
            let probs = model.forward(&mut tape, &store, &step_nodes, &masks, &mut dropout_rng);
            let targets = build_window_targets(task, n_classes, records, &batch);
            let loss = tape.bce_loss(probs, targets);
            let grads = tape.backward(&store, loss)?;
            optimizer.step(&mut store, &grads)?;
            steps += 1;
        }

        let val_probs = eval_window_probs(&model, &store, inputs, records, &val_windows, k)?;
        let val_loss = mean_bce(&val_probs, &val_targets);
        if val_loss < best_val {
            best_val = val_loss;
            best_params = Some(store.clone());
            steps_at_best = steps;
        } else if steps - steps_at_best >= config.train.patience_steps {
            early_stopped = true;
            break;
        }
    }
    if let Some(best) = best_params {
        store = best;
    }

    let test_probs = eval_window_probs(&model, &store, inputs, records, &test_windows, k)?;
    let scores = collect_window_scores(task, n_classes, records, &test_windows, test_probs);
    Ok((
        TrainedSequence {
            model,
            store,
            log: TrainLog {
                epochs_run,
                steps,
                best_val_loss: best_val,
                early_stopped,
            },
        },
        scores,
    ))
}

fn mean_bce(probs: &[Vec<f64>], targets: &Tensor2D<f32>) -> f64 {
    let mut total = 0.0f64;
    let mut n = 0usize;
    for (b, row) in probs.iter().enumerate() {
        for (c, &p) in row.iter().enumerate() {
            let p = p.clamp(crate::nn::BCE_EPS, 1.0 - crate::nn::BCE_EPS);
            let y = targets.get(b, c) as f64;
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            n += 1;
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SequenceSection;
    use crate::ingest::Admission;
    use crate::nn::CellType;

    fn admission(patient: &str, id: &str, diag: Vec<usize>, readmit: bool) -> Admission {
        Admission {
            patient_id: patient.into(),
            admission_id: id.into(),
            admit_time: 0,
            discharge_time: 86_400,
            duration_days: 1.0,
            days_since_prior: None,
            diag_codes: diag,
            proc_codes: vec![],
            med_codes: vec![],
            note_chunk_ids: vec![],
            readmitted_30d: readmit,
            next_diag_multihot: None,
        }
    }

    fn record(patient: &str, spec: &[(Vec<usize>, bool)]) -> PatientRecord {
        PatientRecord {
            patient_id: patient.into(),
            admissions: spec
                .iter()
                .enumerate()
                .map(|(i, (diag, readmit))| {
                    admission(patient, &format!("{patient}-{i}"), diag.clone(), *readmit)
                })
                .collect(),
        }
    }

    fn section(k: usize, bidir: bool) -> SequenceSection {
        SequenceSection {
            cell: CellType::Gru,
            hidden: 255,
            layers: 1,
            window: k,
            bidirectional: bidir,
            dropout: 0.0,
            max_epochs: 1,
            input: SequenceInput::MultiHot,
            finetune_upstream: false,
        }
    }

    #[test]
    fn multihot_steps_and_masks_follow_slots() {
        let records = vec![record(
            "p0",
            &[(vec![1, 3], false), (vec![2], true), (vec![3], false)],
        )];
        let windows = build_windows(0, &records[0], 3);
        assert_eq!(windows.len(), 2);
        let batch: Vec<&WindowSample> = windows.iter().collect();
        let mut tape: Tape<f32> = Tape::new(false);
        let store: ParamStore<f32> = ParamStore::new();
        let mut r = crate::rng::stream(1, "seq-test", 0);
        let (steps, masks) = build_steps(
            &mut tape,
            &store,
            &StepInputs::MultiHot { n_codes: 3 },
            &records,
            &batch,
            3,
            &mut r,
        )
        .unwrap();
        assert_eq!(steps.len(), 3);
        // Window 0 labels admission 1: slots [None, None, Some(0)].
        // Window 1 labels admission 2: slots [None, Some(0), Some(1)].
        assert_eq!(masks[0].get(0, 0), 0.0);
        assert_eq!(masks[0].get(1, 0), 0.0);
        assert_eq!(masks[1].get(0, 0), 0.0);
        assert_eq!(masks[1].get(1, 0), 1.0);
        assert_eq!(masks[2].get(0, 0), 1.0);
        assert_eq!(masks[2].get(1, 0), 1.0);
        // Step 2, window 0 holds admission 0's codes {1, 3} at indices 0, 2.
        let s2 = tape.value(steps[2]);
        assert_eq!(s2.get(0, 0), 1.0);
        assert_eq!(s2.get(0, 1), 0.0);
        assert_eq!(s2.get(0, 2), 1.0);
        // Step 1, window 0 is padding: all zeros.
        let s1 = tape.value(steps[1]);
        assert!(s1.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_targets_cover_both_tasks() {
        let records = vec![record(
            "p0",
            &[(vec![1], true), (vec![2], false), (vec![1, 3], false)],
        )];
        let windows = build_windows(0, &records[0], 2);
        let batch: Vec<&WindowSample> = windows.iter().collect();
        let readmit: Tensor2D<f64> =
            build_window_targets(Task::Readmission, 1, &records, &batch);
        // Window labeling admission 1 reads admission 0's flag.
        assert_eq!(readmit.get(0, 0), 1.0);
        assert_eq!(readmit.get(1, 0), 0.0);
        let diag: Tensor2D<f64> =
            build_window_targets(Task::DiagnosisCcs, 3, &records, &batch);
        // Window 0 predicts admission 1's codes {2}; window 1 predicts {1, 3}.
        assert_eq!(diag.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(diag.row(1), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn dense_steps_read_the_representation_store() {
        let records = vec![record("p0", &[(vec![1], false), (vec![2], true)])];
        let mut reprs = VectorStore::new(2);
        reprs.insert("p0-0", &[0.25, -1.0]).unwrap();
        reprs.insert("p0-1", &[0.5, 2.0]).unwrap();
        let windows = build_windows(0, &records[0], 2);
        let batch: Vec<&WindowSample> = windows.iter().collect();
        let mut tape: Tape<f32> = Tape::new(false);
        let store: ParamStore<f32> = ParamStore::new();
        let mut r = crate::rng::stream(1, "seq-test", 1);
        let (steps, _masks) = build_steps(
            &mut tape,
            &store,
            &StepInputs::Dense(&reprs),
            &records,
            &batch,
            2,
            &mut r,
        )
        .unwrap();
        let s1 = tape.value(steps[1]);
        assert_eq!(s1.get(0, 0), 0.25);
        assert_eq!(s1.get(0, 1), -1.0);
    }

    #[test]
    fn dense_steps_reject_missing_admissions() {
        let records = vec![record("p0", &[(vec![1], false), (vec![2], true)])];
        let reprs = VectorStore::new(2);
        let windows = build_windows(0, &records[0], 2);
        let batch: Vec<&WindowSample> = windows.iter().collect();
        let mut tape: Tape<f32> = Tape::new(false);
        let store: ParamStore<f32> = ParamStore::new();
        let mut r = crate::rng::stream(1, "seq-test", 2);
        let err = build_steps(
            &mut tape,
            &store,
            &StepInputs::Dense(&reprs),
            &records,
            &batch,
            2,
            &mut r,
        );
        assert!(err.is_err());
    }

    #[test]
    fn window_subsampling_balances_classes() {
        let mut records = Vec::new();
        for i in 0..30 {
            let readmit = i < 6;
            records.push(record(
                &format!("p{i}"),
                &[(vec![1], readmit), (vec![2], false)],
            ));
        }
        let windows: Vec<WindowSample> = records
            .iter()
            .enumerate()
            .flat_map(|(pi, r)| build_windows(pi, r, 3))
            .collect();
        let balanced = subsample_negative_windows(windows, &records, 7).unwrap();
        let positives = balanced
            .iter()
            .filter(|w| window_label(&records, w))
            .count();
        assert_eq!(positives, 6);
        assert_eq!(balanced.len(), 12);
    }

    #[test]
    fn forward_shapes_match_head() {
        let records = vec![record(
            "p0",
            &[(vec![1], false), (vec![2], true), (vec![3], false)],
        )];
        let windows = build_windows(0, &records[0], 3);
        let batch: Vec<&WindowSample> = windows.iter().collect();
        let mut store: ParamStore<f32> = ParamStore::new();
        let mut r = crate::rng::stream(3, "seq-shape", 0);
        let model = SequenceModel::init(&mut store, &mut r, &section(3, true), 3, 4);
        let mut tape: Tape<f32> = Tape::new(false);
        let (steps, masks) = build_steps(
            &mut tape,
            &store,
            &StepInputs::MultiHot { n_codes: 3 },
            &records,
            &batch,
            3,
            &mut r,
        )
        .unwrap();
        let probs = model.forward(&mut tape, &store, &steps, &masks, &mut r);
        let v = tape.value(probs);
        assert_eq!(v.shape(), (2, 4));
        assert!(v.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}
