//! Experiment configuration: TOML-backed, validated, and fingerprinted so
//! every artifact can be traced back to the exact settings that produced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;
use crate::synth::SyntheticCohortSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Readmission,
    DiagnosisIcd9,
    DiagnosisCcs,
}

impl Task {
    pub fn is_diagnosis(self) -> bool {
        matches!(self, Task::DiagnosisIcd9 | Task::DiagnosisCcs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Admission,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    Patient,
    /// Admission-level split that leaks patients across folds. Comparison
    /// runs only.
    AdmissionLeaky,
}

/// Which rolled space the diagnosis and procedure inputs live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeSpace {
    Icd9Parent,
    Ccs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: String,
    pub seed: u64,
    pub task: Task,
    pub architecture: Architecture,
    pub n_folds: usize,
    pub fold_mode: FoldMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "default".into(),
            seed: 42,
            task: Task::Readmission,
            architecture: Architecture::Admission,
            n_folds: 10,
            fold_mode: FoldMode::Patient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Frozen note-chunk vectors; required only when text features are on.
    pub chunk_store: Option<PathBuf>,
    /// Frozen per-code vectors; required only when med features are on.
    pub code_embedding_store: Option<PathBuf>,
    pub diag_ccs_crosswalk: Option<PathBuf>,
    pub ndc_cui_crosswalk: Option<PathBuf>,
    pub diag_universe: Option<PathBuf>,
    pub proc_universe: Option<PathBuf>,
    pub med_universe: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            chunk_store: None,
            code_embedding_store: None,
            diag_ccs_crosswalk: None,
            ndc_cui_crosswalk: None,
            diag_universe: None,
            proc_universe: None,
            med_universe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub use_text: bool,
    pub use_duration: bool,
    pub use_days_since_prior: bool,
    pub use_diag: bool,
    pub use_proc: bool,
    pub use_med: bool,
    pub code_space: CodeSpace,
    pub temporal_hidden: usize,
    pub code_bottleneck: usize,
    pub dropout: f64,
    /// Eval-time chunk aggregation constant c in lambda = k / c.
    pub chunk_agg_c: f64,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            use_text: false,
            use_duration: true,
            use_days_since_prior: true,
            use_diag: true,
            use_proc: true,
            use_med: false,
            code_space: CodeSpace::Icd9Parent,
            temporal_hidden: 50,
            code_bottleneck: 768,
            dropout: 0.1,
            chunk_agg_c: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early-stopping patience, counted in optimizer steps.
    pub patience_steps: usize,
    pub lookahead: bool,
    pub lookahead_interval: usize,
    pub lookahead_alpha: f64,
    pub subsample_negatives: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 64,
            learning_rate: 0.001,
            max_epochs: 100,
            patience_steps: 200,
            lookahead: false,
            lookahead_interval: 6,
            lookahead_alpha: 0.5,
            subsample_negatives: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceInput {
    /// Multi-hot rolled code vectors per admission.
    MultiHot,
    /// Dense representations exported from a trained admission encoder.
    DenseRepresentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSection {
    pub cell: crate::nn::CellType,
    pub hidden: usize,
    pub layers: usize,
    pub window: usize,
    pub bidirectional: bool,
    pub dropout: f64,
    pub max_epochs: usize,
    pub input: SequenceInput,
    /// Backpropagate through the upstream admission encoder instead of
    /// consuming frozen exported representations. Default off.
    pub finetune_upstream: bool,
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection {
            cell: crate::nn::CellType::Gru,
            hidden: 255,
            layers: 1,
            window: 3,
            bidirectional: false,
            dropout: 0.2,
            max_epochs: 200,
            input: SequenceInput::MultiHot,
            finetune_upstream: false,
        }
    }
}

pub const SEQUENCE_HIDDEN_CHOICES: [usize; 2] = [255, 818];
pub const SEQUENCE_LAYER_CHOICES: [usize; 3] = [1, 2, 3];
pub const SEQUENCE_WINDOW_CHOICES: [usize; 2] = [3, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub paths: PathsSection,
    pub features: FeatureSection,
    pub train: TrainSection,
    pub sequence: SequenceSection,
    pub synth: SyntheticCohortSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.experiment.n_folds < 3 {
            return fail(format!(
                "n_folds = {} but the rotation needs at least 3 folds",
                self.experiment.n_folds
            ));
        }
        if self.train.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} out of range", self.train.learning_rate));
        }
        for (name, d) in [
            ("features.dropout", self.features.dropout),
            ("sequence.dropout", self.sequence.dropout),
        ] {
            if !(0.0..1.0).contains(&d) {
                return fail(format!("{name} = {d} outside [0, 1)"));
            }
        }
        if self.features.temporal_hidden == 0 {
            return fail("temporal_hidden must be positive".into());
        }
        if self.features.code_bottleneck == 0 {
            return fail("code_bottleneck must be positive".into());
        }
        if !(self.features.chunk_agg_c > 0.0) {
            return fail("chunk_agg_c must be positive".into());
        }
        let f = &self.features;
        if !(f.use_text || f.use_duration || f.use_days_since_prior || f.use_diag || f.use_proc || f.use_med)
        {
            return fail("no input features enabled".into());
        }
        if !SEQUENCE_HIDDEN_CHOICES.contains(&self.sequence.hidden) {
            return fail(format!(
                "sequence.hidden = {} not in {:?}",
                self.sequence.hidden, SEQUENCE_HIDDEN_CHOICES
            ));
        }
        if !SEQUENCE_LAYER_CHOICES.contains(&self.sequence.layers) {
            return fail(format!(
                "sequence.layers = {} not in {:?}",
                self.sequence.layers, SEQUENCE_LAYER_CHOICES
            ));
        }
        if !SEQUENCE_WINDOW_CHOICES.contains(&self.sequence.window) {
            return fail(format!(
                "sequence.window = {} not in {:?}",
                self.sequence.window, SEQUENCE_WINDOW_CHOICES
            ));
        }
        if self.experiment.task.is_diagnosis() && self.train.subsample_negatives {
            return fail("negative subsampling applies to the readmission task only".into());
        }
        // Label and input spaces must agree for diagnosis prediction.
        let wanted_space = match self.experiment.task {
            Task::DiagnosisIcd9 => Some(CodeSpace::Icd9Parent),
            Task::DiagnosisCcs => Some(CodeSpace::Ccs),
            Task::Readmission => None,
        };
        if let Some(space) = wanted_space {
            if self.features.code_space != space {
                return fail(format!(
                    "task {:?} needs code_space {:?}, got {:?}",
                    self.experiment.task, space, self.features.code_space
                ));
            }
        }
        if self.sequence.finetune_upstream && self.sequence.input != SequenceInput::DenseRepresentation
        {
            return fail("finetune_upstream only applies to dense_representation input".into());
        }
        if self.train.lookahead {
            if self.train.lookahead_interval < 2 {
                return fail("lookahead_interval must be at least 2".into());
            }
            if !(0.0..=1.0).contains(&self.train.lookahead_alpha) {
                return fail("lookahead_alpha outside [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.train.learning_rate,
            lookahead: self.train.lookahead,
            lookahead_interval: self.train.lookahead_interval as u64,
            lookahead_alpha: self.train.lookahead_alpha,
            ..OptimizerConfig::default()
        }
    }

    /// Short hex digest of the canonical TOML rendering. Stored in every
    /// checkpoint and report so mixed-config artifacts are rejected early.
    pub fn fingerprint(&self) -> String {
        let canonical = self.to_toml_string().expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
