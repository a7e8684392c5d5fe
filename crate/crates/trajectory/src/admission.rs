//! Feature-flexible admission encoder: frozen text-chunk vectors, temporal
//! dense blocks, code-embedding bottlenecks, a shared concatenation layer,
//! and a per-class sigmoid head. Training samples are per chunk when text
//! is enabled; chunk probabilities are fused at evaluation time.

use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, FeatureSection, Task};
use crate::error::{Error, Result};
use crate::folds::{AdmissionRef, SplitSpec};
use crate::ingest::{PatientRecord, TemporalRescaler, CHUNK_DIM};
use crate::nn::{
    DenseBlock, FrozenEmbedding, NodeId, Optimizer, ParamId, ParamStore, Scalar, Tape, Tensor2D,
};
use crate::rng;
use crate::store::VectorStore;

/// One training/evaluation sample: an admission, or one chunk of it when
/// text features are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub adm: AdmissionRef,
    pub chunk: Option<usize>,
}

/// Frozen per-space code embeddings, loaded once per run.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet<F> {
    pub diag: Option<FrozenEmbedding<F>>,
    pub proc: Option<FrozenEmbedding<F>>,
    pub med: Option<FrozenEmbedding<F>>,
}

/// Input widths of the three code paths. Zero marks a feature without a
/// loaded table; enabling such a feature is an init-time panic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathDims {
    pub diag: usize,
    pub proc: usize,
    pub med: usize,
}

impl PathDims {
    pub fn from_embeddings<F: Scalar>(e: &EmbeddingSet<F>) -> Self {
        PathDims {
            diag: e.diag.as_ref().map_or(0, FrozenEmbedding::dim),
            proc: e.proc.as_ref().map_or(0, FrozenEmbedding::dim),
            med: e.med.as_ref().map_or(0, FrozenEmbedding::dim),
        }
    }

    pub fn uniform(dim: usize) -> Self {
        PathDims {
            diag: dim,
            proc: dim,
            med: dim,
        }
    }
}

/// Concatenated representation width for a feature selection.
pub fn repr_dim(f: &FeatureSection) -> usize {
    let mut dim = 0;
    if f.use_text {
        dim += CHUNK_DIM;
    }
    if f.use_duration {
        dim += f.temporal_hidden;
    }
    if f.use_days_since_prior {
        dim += f.temporal_hidden;
    }
    for on in [f.use_diag, f.use_proc, f.use_med] {
        if on {
            dim += f.code_bottleneck;
        }
    }
    dim
}

/// Embedding lookup -> layer norm -> dropout -> masked mean -> dense
/// bottleneck.
#[derive(Debug, Clone)]
pub struct CodePath {
    pub gain: ParamId,
    pub shift: ParamId,
    pub bottleneck: DenseBlock,
    pub dropout: f64,
    pub emb_dim: usize,
}

impl CodePath {
    fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        emb_dim: usize,
        out_dim: usize,
        dropout: f64,
    ) -> Self {
        CodePath {
            gain: store.add_ones(format!("{prefix}.gain"), 1, emb_dim),
            shift: store.add_zeros(format!("{prefix}.shift"), 1, emb_dim),
            bottleneck: DenseBlock::init(store, rng, &format!("{prefix}.bottleneck"), emb_dim, out_dim, dropout),
            dropout,
            emb_dim,
        }
    }

    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        stacked: Tensor2D<F>,
        mask: Tensor2D<F>,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let x = tape.input(stacked);
        let gain = tape.param(store, self.gain);
        let shift = tape.param(store, self.shift);
        let x = tape.layer_norm(x, gain, shift);
        let x = tape.dropout(x, self.dropout, rng);
        let pooled = tape.group_mean_rows(x, mask);
        self.bottleneck.forward(tape, store, pooled, rng)
    }
}

#[derive(Debug, Clone)]
pub struct AdmissionModel {
    pub features: FeatureSection,
    pub n_classes: usize,
    pub duration_block: Option<DenseBlock>,
    pub days_block: Option<DenseBlock>,
    pub diag_path: Option<CodePath>,
    pub proc_path: Option<CodePath>,
    pub med_path: Option<CodePath>,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

impl AdmissionModel {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        features: &FeatureSection,
        n_classes: usize,
        dims: PathDims,
    ) -> Self {
        let d = features.dropout;
        let duration_block = features
            .use_duration
            .then(|| DenseBlock::init(store, rng, "adm.duration", 1, features.temporal_hidden, d));
        // Gap feature carries its is-first companion indicator.
        let days_block = features
            .use_days_since_prior
            .then(|| DenseBlock::init(store, rng, "adm.days", 2, features.temporal_hidden, d));
        let code_path = |store: &mut ParamStore<F>, rng: &mut _, on: bool, prefix, dim: usize| {
            on.then(|| {
                assert!(dim > 0, "{prefix}: feature enabled without an embedding table");
                CodePath::init(store, rng, prefix, dim, features.code_bottleneck, d)
            })
        };
        let diag_path = code_path(store, rng, features.use_diag, "adm.diag", dims.diag);
        let proc_path = code_path(store, rng, features.use_proc, "adm.proc", dims.proc);
        let med_path = code_path(store, rng, features.use_med, "adm.med", dims.med);
        let h_dim = repr_dim(features);
        AdmissionModel {
            features: features.clone(),
            n_classes,
            duration_block,
            days_block,
            diag_path,
            proc_path,
            med_path,
            head_w: store.add_weight("adm.head.w", h_dim, n_classes, rng),
            head_b: store.add_zeros("adm.head.b", 1, n_classes),
        }
    }

    /// Builds the concatenated representation for one batch. Returns the
    /// h_admission node; `predict` adds the head.
    pub fn encode<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        inputs: &BatchInputs<F>,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let mut parts: Vec<NodeId> = Vec::new();
        if let Some(text) = &inputs.text {
            parts.push(tape.input(text.clone()));
        }
        if let Some(block) = &self.duration_block {
            let x = tape.input(inputs.duration.clone().ok_or_else(|| {
                Error::Config("duration feature enabled but batch lacks it".into())
            })?);
            parts.push(block.forward(tape, store, x, rng));
        }
        if let Some(block) = &self.days_block {
            let x = tape.input(inputs.days.clone().ok_or_else(|| {
                Error::Config("days_since_prior feature enabled but batch lacks it".into())
            })?);
            parts.push(block.forward(tape, store, x, rng));
        }
        for (path, data, name) in [
            (&self.diag_path, &inputs.diag, "diag"),
            (&self.proc_path, &inputs.proc, "proc"),
            (&self.med_path, &inputs.med, "med"),
        ] {
            if let Some(path) = path {
                let (stacked, mask) = data.clone().ok_or_else(|| {
                    Error::Config(format!("{name} feature enabled but batch lacks it"))
                })?;
                parts.push(path.forward(tape, store, stacked, mask, rng));
            }
        }
        if parts.is_empty() {
            return Err(Error::Config("no input features enabled".into()));
        }
        let h = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat_cols(&parts)
        };
        let got = tape.value(h).cols;
        let want = repr_dim(&self.features);
        if got != want {
            return Err(Error::Config(format!(
                "representation dim {got} != configured {want}"
            )));
        }
        Ok(h)
    }

    pub fn predict<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        h: NodeId,
    ) -> NodeId {
        let w = tape.param(store, self.head_w);
        let b = tape.param(store, self.head_b);
        let logits = tape.matmul(h, w);
        let logits = tape.add_bias(logits, b);
        tape.sigmoid(logits)
    }
}

/// Raw tensors for one batch, in vocabulary/chunk space, rescaled.
#[derive(Debug, Clone)]
pub struct BatchInputs<F> {
    pub batch: usize,
    pub text: Option<Tensor2D<F>>,
    pub duration: Option<Tensor2D<F>>,
    pub days: Option<Tensor2D<F>>,
    pub diag: Option<(Tensor2D<F>, Tensor2D<F>)>,
    pub proc: Option<(Tensor2D<F>, Tensor2D<F>)>,
    pub med: Option<(Tensor2D<F>, Tensor2D<F>)>,
}

/// Rescaling statistics fit on the training folds of one iteration.
#[derive(Debug, Clone, Copy)]
pub struct FeaturePrep {
    pub duration: TemporalRescaler,
    pub days: TemporalRescaler,
}

impl FeaturePrep {
    pub fn fit(records: &[PatientRecord], train: &[AdmissionRef]) -> Self {
        let duration = TemporalRescaler::fit(
            train.iter().map(|r| r.admission(records).duration_days),
        );
        let days = TemporalRescaler::fit(
            train
                .iter()
                .filter_map(|r| r.admission(records).days_since_prior),
        );
        FeaturePrep { duration, days }
    }

    /// Assembles input tensors for a sample batch.
    pub fn build_inputs<F: Scalar>(
        &self,
        features: &FeatureSection,
        records: &[PatientRecord],
        samples: &[SampleRef],
        embeddings: &EmbeddingSet<F>,
        chunks: Option<&VectorStore>,
    ) -> Result<BatchInputs<F>> {
        let batch = samples.len();
        let mut inputs = BatchInputs {
            batch,
            text: None,
            duration: None,
            days: None,
            diag: None,
            proc: None,
            med: None,
        };
        if features.use_text {
            let store = chunks.ok_or_else(|| {
                Error::Config("text features enabled without a chunk store".into())
            })?;
            let mut text = Tensor2D::zeros(batch, CHUNK_DIM);
            for (b, s) in samples.iter().enumerate() {
                let adm = s.adm.admission(records);
                let chunk = s.chunk.ok_or_else(|| {
                    Error::Integrity(format!(
                        "admission {} sampled without a chunk index under text features",
                        adm.admission_id
                    ))
                })?;
                let id = adm.note_chunk_ids.get(chunk).ok_or_else(|| {
                    Error::Integrity(format!(
                        "admission {} has no chunk {chunk}",
                        adm.admission_id
                    ))
                })?;
                let vec = store.get(id).ok_or_else(|| {
                    Error::Integrity(format!("chunk {id} missing from the embedding store"))
                })?;
                for (j, &v) in vec.iter().enumerate() {
                    text.set(b, j, F::from_f64(v as f64));
                }
            }
            inputs.text = Some(text);
        }
        if features.use_duration {
            let mut t = Tensor2D::zeros(batch, 1);
            for (b, s) in samples.iter().enumerate() {
                t.set(b, 0, F::from_f64(self.duration.transform(s.adm.admission(records).duration_days)));
            }
            inputs.duration = Some(t);
        }
        if features.use_days_since_prior {
            let mut t = Tensor2D::zeros(batch, 2);
            for (b, s) in samples.iter().enumerate() {
                match s.adm.admission(records).days_since_prior {
                    Some(v) => t.set(b, 0, F::from_f64(self.days.transform(v))),
                    // First admission: imputed zero plus the indicator.
                    None => t.set(b, 1, F::one()),
                }
            }
            inputs.days = Some(t);
        }
        for (on, emb, pick, slot) in [
            (
                features.use_diag,
                &embeddings.diag,
                (|a: &crate::ingest::Admission| &a.diag_codes) as fn(&crate::ingest::Admission) -> &Vec<usize>,
                0usize,
            ),
            (features.use_proc, &embeddings.proc, |a: &crate::ingest::Admission| &a.proc_codes, 1),
            (features.use_med, &embeddings.med, |a: &crate::ingest::Admission| &a.med_codes, 2),
        ] {
            if !on {
                continue;
            }
            let emb = emb.as_ref().ok_or_else(|| {
                Error::Config("code feature enabled without its embedding table".into())
            })?;
            let lists: Vec<&[usize]> = samples
                .iter()
                .map(|s| pick(s.adm.admission(records)).as_slice())
                .collect();
            let (stacked, mask, _width) = emb.lookup_batch(&lists);
            let pair = Some((stacked, mask));
            match slot {
                0 => inputs.diag = pair,
                1 => inputs.proc = pair,
                _ => inputs.med = pair,
            }
        }
        Ok(inputs)
    }
}

/// Expands admission refs into samples: one per chunk when text is on
/// (admissions without chunks are dropped with a count), one per admission
/// otherwise. Diagnosis tasks keep only labeled admissions.
pub fn expand_samples(
    features: &FeatureSection,
    task: Task,
    records: &[PatientRecord],
    refs: &[AdmissionRef],
) -> (Vec<SampleRef>, usize) {
    let mut out = Vec::with_capacity(refs.len());
    let mut dropped = 0usize;
    for &adm in refs {
        let a = adm.admission(records);
        if task.is_diagnosis() && a.next_diag_multihot.is_none() {
            continue;
        }
        if features.use_text {
            if a.note_chunk_ids.is_empty() {
                dropped += 1;
                continue;
            }
            for chunk in 0..a.note_chunk_ids.len() {
                out.push(SampleRef {
                    adm,
                    chunk: Some(chunk),
                });
            }
        } else {
            out.push(SampleRef { adm, chunk: None });
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} admissions without note chunks (text features on)");
    }
    (out, dropped)
}

/// Target matrix for a sample batch.
pub fn build_targets<F: Scalar>(
    task: Task,
    n_classes: usize,
    records: &[PatientRecord],
    samples: &[SampleRef],
) -> Tensor2D<F> {
    let mut t = Tensor2D::zeros(samples.len(), n_classes);
    for (b, s) in samples.iter().enumerate() {
        let a = s.adm.admission(records);
        match task {
            Task::Readmission => {
                if a.readmitted_30d {
                    t.set(b, 0, F::one());
                }
            }
            Task::DiagnosisIcd9 | Task::DiagnosisCcs => {
                for &idx in a.next_diag_multihot.as_deref().unwrap_or(&[]) {
                    // Vocabulary index 0 is the pad; classes shift down one.
                    t.set(b, idx - 1, F::one());
                }
            }
        }
    }
    t
}

/// Per-chunk class probabilities of one admission, fused at evaluation
/// time.
#[derive(Debug, Clone)]
pub struct ChunkPredictionGroup {
    pub admission_id: String,
    /// probs[chunk][class]
    pub probs: Vec<Vec<f64>>,
    pub c: f64,
}

/// Weighted max/mean fusion: per class, (p_max + p_mean * lambda) / (1 +
/// lambda) with lambda = k / c. A single chunk passes through unchanged.
pub fn aggregate_chunks(group: &ChunkPredictionGroup) -> Result<Vec<f64>> {
    let k = group.probs.len();
    if k == 0 {
        return Err(Error::Integrity(format!(
            "admission {} has no chunk predictions to aggregate",
            group.admission_id
        )));
    }
    let n_classes = group.probs[0].len();
    let lambda = k as f64 / group.c;
    let mut out = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let mut p_max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for chunk in &group.probs {
            let p = chunk[class];
            p_max = p_max.max(p);
            sum += p;
        }
        let p_mean = sum / k as f64;
        out.push((p_max + p_mean * lambda) / (1.0 + lambda));
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

pub struct TrainedAdmission {
    pub model: AdmissionModel,
    pub store: ParamStore<f32>,
    pub prep: FeaturePrep,
    pub log: TrainLog,
}

/// Per-admission evaluation scores with their labels.
pub struct AdmissionScores {
    pub admission_ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub binary_labels: Vec<bool>,
    pub multihot_labels: Vec<Vec<bool>>,
}

const EVAL_BATCH: usize = 256;

fn mean_bce(probs: &Tensor2D<f32>, targets: &Tensor2D<f32>) -> f64 {
    let mut total = 0.0f64;
    for (p, y) in probs.data().iter().zip(targets.data()) {
        let p = (*p as f64).clamp(crate::nn::BCE_EPS, 1.0 - crate::nn::BCE_EPS);
        let y = *y as f64;
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / probs.len() as f64
}

/// Forward pass in eval mode over samples, batched; returns per-sample
/// probabilities.
fn eval_probs(
    model: &AdmissionModel,
    store: &ParamStore<f32>,
    prep: &FeaturePrep,
    records: &[PatientRecord],
    samples: &[SampleRef],
    embeddings: &EmbeddingSet<f32>,
    chunks: Option<&VectorStore>,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut rng = rng::stream(0, "eval-unused", 0);
    for batch in samples.chunks(EVAL_BATCH) {
        let inputs = prep.build_inputs(&model.features, records, batch, embeddings, chunks)?;
        let mut tape: Tape<f32> = Tape::new(false);
        let h = model.encode(&mut tape, store, &inputs, &mut rng)?;
        let probs = model.predict(&mut tape, store, h);
        let value = tape.value(probs);
        for b in 0..batch.len() {
            out.push(value.row(b).iter().map(|&p| p as f64).collect());
        }
    }
    Ok(out)
}

/// Groups per-sample probabilities back to admissions, fusing chunk
/// predictions when text features are on.
fn collect_admission_scores(
    model: &AdmissionModel,
    task: Task,
    records: &[PatientRecord],
    samples: &[SampleRef],
    probs: &[Vec<f64>],
    chunk_agg_c: f64,
) -> Result<AdmissionScores> {
    let mut scores = AdmissionScores {
        admission_ids: Vec::new(),
        scores: Vec::new(),
        binary_labels: Vec::new(),
        multihot_labels: Vec::new(),
    };
    let mut i = 0usize;
    while i < samples.len() {
        let adm_ref = samples[i].adm;
        let mut j = i;
        while j < samples.len() && samples[j].adm == adm_ref {
            j += 1;
        }
        let a = adm_ref.admission(records);
        let fused = if model.features.use_text {
            aggregate_chunks(&ChunkPredictionGroup {
                admission_id: a.admission_id.clone(),
                probs: probs[i..j].to_vec(),
                c: chunk_agg_c,
            })?
        } else {
            debug_assert_eq!(j, i + 1);
            probs[i].clone()
        };
        scores.admission_ids.push(a.admission_id.clone());
        scores.scores.push(fused);
        match task {
            Task::Readmission => scores.binary_labels.push(a.readmitted_30d),
            Task::DiagnosisIcd9 | Task::DiagnosisCcs => {
                let mut row = vec![false; model.n_classes];
                for &idx in a.next_diag_multihot.as_deref().unwrap_or(&[]) {
                    row[idx - 1] = true;
                }
                scores.multihot_labels.push(row);
            }
        }
        i = j;
    }
    Ok(scores)
}

/// Trains one cross-validation iteration of the admission model and scores
/// the test fold. `folds` holds the expanded per-fold admission lists;
/// subsampling (readmission only) happens here, once per iteration.
pub fn train_admission_model(
    config: &ExperimentConfig,
    records: &[PatientRecord],
    folds: &[Vec<AdmissionRef>],
    split: &SplitSpec,
    n_classes: usize,
    embeddings: &EmbeddingSet<f32>,
    chunks: Option<&VectorStore>,
) -> Result<(TrainedAdmission, AdmissionScores)> {
    let task = config.experiment.task;
    let features = &config.features;
    let seed = config.experiment.seed;
    let fold_tag = split.test as u64;

    let mut train_refs: Vec<AdmissionRef> = split
        .train
        .iter()
        .flat_map(|&f| folds[f].iter().copied())
        .collect();
    if task == Task::Readmission && config.train.subsample_negatives {
        train_refs = crate::folds::subsample_negatives(
            &train_refs,
            records,
            rng::subseed(seed, "adm-subsample", fold_tag),
        )?;
    }
    let prep = FeaturePrep::fit(records, &train_refs);

    let (train_samples, _) = expand_samples(features, task, records, &train_refs);
    let (val_samples, _) = expand_samples(features, task, records, &folds[split.val]);
    let (test_samples, _) = expand_samples(features, task, records, &folds[split.test]);
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::Integrity(
            "a training or validation fold produced no usable samples".into(),
        ));
    }

    let mut store: ParamStore<f32> = ParamStore::new();
    let mut init_rng = rng::stream(seed, "adm-init", fold_tag);
    let model = AdmissionModel::init(
        &mut store,
        &mut init_rng,
        features,
        n_classes,
        PathDims::from_embeddings(embeddings),
    );
    let mut optimizer = Optimizer::new(&store, config.optimizer_config());

    let val_targets: Tensor2D<f32> = build_targets(task, n_classes, records, &val_samples);
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<ParamStore<f32>> = None;
    let mut steps_at_best = 0usize;
    let mut steps = 0usize;
    let mut epochs_run = 0usize;
    let mut early_stopped = false;

    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    for epoch in 0..config.train.max_epochs {
        epochs_run = epoch + 1;
        let epoch_tag = fold_tag << 32 | epoch as u64;
        let mut shuffle_rng = rng::stream(seed, "adm-epoch-shuffle", epoch_tag);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);
        let mut dropout_rng = rng::stream(seed, "adm-dropout", epoch_tag);

        for batch_idx in order.chunks(config.train.batch_size) {
            let batch: Vec<SampleRef> = batch_idx.iter().map(|&i| train_samples[i]).collect();
            let inputs = prep.build_inputs(features, records, &batch, embeddings, chunks)?;
            let targets = build_targets(task, n_classes, records, &batch);
            let mut tape: Tape<f32> = Tape::new(true);
            let h = model.encode(&mut tape, &store, &inputs, &mut dropout_rng)?;
            let probs = model.predict(&mut tape, &store, h);
            let loss = tape.bce_loss(probs, targets);
            let grads = tape.backward(&store, loss)?;
            optimizer.step(&mut store, &grads)?;
            steps += 1;
        }

        let val_probs = eval_probs(&model, &store, &prep, records, &val_samples, embeddings, chunks)?;
        let mut flat = Tensor2D::zeros(val_probs.len(), n_classes);
        for (b, row) in val_probs.iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                flat.set(b, c, p as f32);
            }
        }
        let val_loss = mean_bce(&flat, &val_targets);
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

    let test_probs = eval_probs(&model, &store, &prep, records, &test_samples, embeddings, chunks)?;
    let scores = collect_admission_scores(
        &model,
        task,
        records,
        &test_samples,
        &test_probs,
        features.chunk_agg_c,
    )?;
    Ok((
        TrainedAdmission {
            model,
            store,
            prep,
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

/// Exports one fixed representation per admission for the sequence model.
/// Text-enabled models are rejected: an admission would map to several
/// chunk-level representations instead of one vector.
pub fn export_representations(
    model: &AdmissionModel,
    store: &ParamStore<f32>,
    prep: &FeaturePrep,
    records: &[PatientRecord],
    embeddings: &EmbeddingSet<f32>,
) -> Result<VectorStore> {
    if model.features.use_text {
        return Err(Error::Config(
            "models trained with text features produce one representation per chunk, \
             not per admission; disable text to export"
                .into(),
        ));
    }
    let mut out = VectorStore::new(repr_dim(&model.features));
    let mut rng = rng::stream(0, "export-unused", 0);
    let all: Vec<SampleRef> = records
        .iter()
        .enumerate()
        .flat_map(|(patient, r)| {
            (0..r.admissions.len()).map(move |index| SampleRef {
                adm: AdmissionRef { patient, index },
                chunk: None,
            })
        })
        .collect();
    for batch in all.chunks(EVAL_BATCH) {
        let inputs = prep.build_inputs(&model.features, records, batch, embeddings, None)?;
        let mut tape: Tape<f32> = Tape::new(false);
        let h = model.encode(&mut tape, store, &inputs, &mut rng)?;
        let value = tape.value(h);
        for (b, s) in batch.iter().enumerate() {
            out.insert(s.adm.admission(records).admission_id.clone(), value.row(b))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CodeSpace;
    use rand::Rng;

    fn features(text: bool, duration: bool, days: bool, diag: bool, proc: bool, med: bool) -> FeatureSection {
        FeatureSection {
            use_text: text,
            use_duration: duration,
            use_days_since_prior: days,
            use_diag: diag,
            use_proc: proc,
            use_med: med,
            code_space: CodeSpace::Ccs,
            temporal_hidden: 50,
            code_bottleneck: 768,
            dropout: 0.0,
            chunk_agg_c: 2.0,
        }
    }

    #[test]
    fn dimension_arithmetic_reference_cases() {
        // diag + days: the 818 used by the largest recurrent layer.
        assert_eq!(repr_dim(&features(false, false, true, true, false, false)), 818);
        assert_eq!(repr_dim(&features(true, false, false, false, false, false)), 768);
        assert_eq!(repr_dim(&features(false, true, true, false, false, false)), 100);
        assert_eq!(
            repr_dim(&features(true, true, true, true, true, true)),
            768 + 50 + 50 + 3 * 768
        );
    }

    #[test]
    fn dimension_arithmetic_all_combinations() {
        for bits in 1..64u32 {
            let f = features(
                bits & 1 != 0,
                bits & 2 != 0,
                bits & 4 != 0,
                bits & 8 != 0,
                bits & 16 != 0,
                bits & 32 != 0,
            );
            let mut want = 0;
            if f.use_text {
                want += 768;
            }
            if f.use_duration {
                want += 50;
            }
            if f.use_days_since_prior {
                want += 50;
            }
            want += 768 * (f.use_diag as usize + f.use_proc as usize + f.use_med as usize);
            assert_eq!(repr_dim(&f), want, "bits {bits:b}");
        }
    }

    #[test]
    fn aggregate_chunks_reference_cases() {
        let g = |probs: Vec<Vec<f64>>| ChunkPredictionGroup {
            admission_id: "a".into(),
            probs,
            c: 2.0,
        };
        // Single chunk: lambda = 0.5, (0.7 + 0.35) / 1.5 = 0.7.
        let one = aggregate_chunks(&g(vec![vec![0.7]])).unwrap();
        assert!((one[0] - 0.7).abs() < 1e-15);
        // k = 2: lambda = 1, max 0.6, mean 0.4 -> 0.5.
        let two = aggregate_chunks(&g(vec![vec![0.2], vec![0.6]])).unwrap();
        assert!((two[0] - 0.5).abs() < 1e-15);
        // k = 4: lambda = 2, max 0.9, mean 0.3 -> (0.9 + 0.6) / 3 = 0.5.
        let four = aggregate_chunks(&g(vec![vec![0.1], vec![0.1], vec![0.1], vec![0.9]])).unwrap();
        assert!((four[0] - 0.5).abs() < 1e-15);
        assert!(aggregate_chunks(&g(vec![])).is_err());
    }

    #[test]
    fn aggregate_chunks_is_identity_for_single_chunk_any_lambda() {
        for c in [0.5, 1.0, 2.0, 7.0] {
            for p in [0.0, 0.123, 0.5, 0.987, 1.0] {
                let got = aggregate_chunks(&ChunkPredictionGroup {
                    admission_id: "a".into(),
                    probs: vec![vec![p]],
                    c,
                })
                .unwrap();
                assert!((got[0] - p).abs() < 1e-15, "c={c} p={p}");
            }
        }
    }

    #[test]
    fn aggregate_chunks_bounded_by_min_max() {
        let mut r = crate::rng::stream(5, "agg-bounds", 0);
        for _ in 0..200 {
            let k = r.gen_range(1..=6);
            let probs: Vec<Vec<f64>> = (0..k).map(|_| vec![r.gen::<f64>()]).collect();
            let lo = probs.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = probs.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let got = aggregate_chunks(&ChunkPredictionGroup {
                admission_id: "a".into(),
                probs,
                c: 2.0,
            })
            .unwrap()[0];
            assert!(got >= lo - 1e-15 && got <= hi + 1e-15);
        }
    }
}
