//! Experiment configuration: a sectioned TOML file, validated before any
//! compute. Unknown keys are rejected; every key has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stagedistil_core::data::SynthConfig;
use stagedistil_core::distil::{StrategyId, StrategySpec, TrainConfig};
use stagedistil_core::losses::LossWeights;
use stagedistil_core::models::{Arch, HeadInput, StudentConfig, TeacherConfig};
use stagedistil_core::nn::KldDirection;
use stagedistil_core::teacher::TeacherTraining;
use stagedistil_core::tokenizer::NUM_TAGS;

use crate::error::{LabError, LabResult};
use crate::formats::ConfigHash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub vocab: VocabSection,
    pub teacher: TeacherSection,
    pub student: StudentSection,
    pub distil: DistilSection,
    pub bench: BenchSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Corpus directory, relative to the artifact root unless absolute.
    pub dir: String,
    /// Keep this many labeled sentences per language (0 keeps all).
    pub labels_per_lang: usize,
    pub subsample_seed: u64,
    /// Use the first N transfer sentences (0 keeps all).
    pub transfer_size: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { dir: "data".into(), labels_per_lang: 0, subsample_seed: 0, transfer_size: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub languages: usize,
    pub labeled_per_lang: usize,
    pub unlabeled: usize,
    pub dev_per_lang: usize,
    pub test_per_lang: usize,
    pub lexicon_size: usize,
    pub function_words: usize,
    pub trigger_rate: f64,
    pub ending_rate: f64,
    pub ambiguity: f64,
    pub domain_overlap: f64,
    pub seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            languages: s.num_langs,
            labeled_per_lang: s.labeled_per_lang,
            unlabeled: s.unlabeled_total,
            dev_per_lang: s.dev_per_lang,
            test_per_lang: s.test_per_lang,
            lexicon_size: s.lexicon_size,
            function_words: s.function_words,
            trigger_rate: s.trigger_rate,
            ending_rate: s.ending_rate,
            ambiguity: s.ambiguity,
            domain_overlap: s.domain_overlap,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabSection {
    pub size: usize,
    pub max_len: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        Self { size: 500, max_len: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub dropout: f64,
    pub local_bias: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_high: f64,
    pub lr_low: f64,
    pub piece_dropout: f64,
    /// Layer whose output is traced; 0 picks the middle layer.
    pub trace_layer: usize,
    pub seed: u64,
}

impl Default for TeacherSection {
    fn default() -> Self {
        let c = TeacherConfig::desk(1, 1);
        let t = TeacherTraining::default();
        Self {
            layers: c.layers,
            width: c.width,
            heads: c.heads,
            ff_width: c.ff_width,
            dropout: c.dropout,
            local_bias: c.local_bias,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_high: t.lr_high,
            lr_low: t.lr_low,
            piece_dropout: t.piece_dropout,
            trace_layer: 0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Bilstm,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Per strategy: hidden for the baselines, projected otherwise.
    Auto,
    Projected,
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Random,
    Svd,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentSection {
    pub arch: ArchKind,
    pub emb_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub ff_width: usize,
    pub head_input: HeadKind,
    pub dropout: f64,
    pub embeddings: EmbeddingKind,
    /// Word-vector text file for `embeddings = "pretrained"`.
    pub vectors: String,
}

impl Default for StudentSection {
    fn default() -> Self {
        Self {
            arch: ArchKind::Bilstm,
            emb_dim: 16,
            hidden: 16,
            depth: 2,
            ff_width: 64,
            head_input: HeadKind::Auto,
            dropout: 0.2,
            embeddings: EmbeddingKind::Random,
            vectors: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KldKind {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistilSection {
    pub strategy: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epochs_per_layer: usize,
    /// Epoch budget for the label-only baselines (D0, D0S), which see far
    /// fewer steps per epoch.
    pub baseline_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr_high: f64,
    pub lr_low: f64,
    pub kld: KldKind,
    pub holdout_fraction: f64,
    pub holdout_cap: usize,
    pub seed: u64,
}

impl Default for DistilSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = StrategySpec::new(StrategyId::D42);
        Self {
            strategy: "D42".into(),
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            // three passes per unfreeze step keep a 5-seed sweep inside half an hour on one core
            epochs_per_layer: 3,
            baseline_epochs: 150,
            patience: s.patience,
            batch_size: t.batch_size,
            lr_high: t.lr_high,
            lr_low: t.lr_low,
            kld: KldKind::Forward,
            holdout_fraction: t.holdout_fraction,
            holdout_cap: t.holdout_cap,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub queries: usize,
    pub seq_len: usize,
    pub batch_size: usize,
    pub runs: usize,
    pub warmup: usize,
    /// Student sweep: `[E, H]` pairs for BiLSTMs or `[E, depth]` pairs for
    /// transformers, following `grid_arch`.
    pub grid: Vec<[usize; 2]>,
    pub grid_arch: ArchKind,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            queries: 1000,
            seq_len: 32,
            batch_size: 32,
            runs: 100,
            warmup: 3,
            grid: vec![[16, 32], [16, 64], [16, 128]],
            grid_arch: ArchKind::Bilstm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    /// Transfer prefix sizes; 0 means the whole transfer set.
    pub transfer_sizes: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { strategies: vec!["D0S".into(), "D1".into(), "D42".into()], seeds: vec![1, 2, 3, 4, 5], transfer_sizes: vec![0] }
    }
}

fn check(errors: &mut Vec<String>, ok: bool, field: &str, msg: &str) {
    if !ok {
        errors.push(format!("{field}: {msg}"));
    }
}

fn unit(x: f64) -> bool {
    (0.0..1.0).contains(&x)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> LabResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or the defaults when `None`), applies `section.key=value`
    /// overrides and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> LabResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(LabError::io(p))?,
            None => String::new(),
        };
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Config(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the normalized TOML form.
    pub fn hash(&self) -> ConfigHash {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn validate(&self) -> LabResult<()> {
        let mut e = Vec::new();
        let s = &self.synthetic;
        check(&mut e, s.languages >= 1, "synthetic.languages", "at least one language");
        check(&mut e, s.lexicon_size >= 1, "synthetic.lexicon_size", "must be positive");
        check(&mut e, s.function_words >= 8, "synthetic.function_words", "at least 8");
        for (name, v) in [("trigger_rate", s.trigger_rate), ("ending_rate", s.ending_rate), ("ambiguity", s.ambiguity), ("domain_overlap", s.domain_overlap)] {
            check(&mut e, (0.0..=1.0).contains(&v), &format!("synthetic.{name}"), "must lie in [0, 1]");
        }
        check(&mut e, self.vocab.size > 4, "vocab.size", "must exceed the 4 reserved tokens");
        check(&mut e, self.vocab.max_len >= 3, "vocab.max_len", "at least 3 ([CLS], one piece, [SEP])");
        let t = &self.teacher;
        for (name, v) in [("layers", t.layers), ("width", t.width), ("heads", t.heads), ("ff_width", t.ff_width), ("batch_size", t.batch_size)] {
            check(&mut e, v > 0, &format!("teacher.{name}"), "must be positive");
        }
        check(&mut e, t.heads == 0 || t.width % t.heads == 0, "teacher.heads", "must divide teacher.width");
        check(&mut e, unit(t.dropout), "teacher.dropout", "must lie in [0, 1)");
        check(&mut e, unit(t.piece_dropout), "teacher.piece_dropout", "must lie in [0, 1)");
        check(&mut e, t.lr_low > 0.0 && t.lr_high >= t.lr_low, "teacher.lr_high", "needs lr_high >= lr_low > 0");
        check(&mut e, t.trace_layer <= t.layers, "teacher.trace_layer", "must be 0 (middle) or a layer in 1..=layers");
        let st = &self.student;
        check(&mut e, st.emb_dim > 0, "student.emb_dim", "must be positive");
        match st.arch {
            ArchKind::Bilstm => check(&mut e, st.hidden > 0, "student.hidden", "must be positive"),
            ArchKind::Transformer => check(&mut e, st.depth == 0 || st.ff_width > 0, "student.ff_width", "must be positive"),
        }
        check(&mut e, unit(st.dropout), "student.dropout", "must lie in [0, 1)");
        check(
            &mut e,
            st.embeddings != EmbeddingKind::Pretrained || !st.vectors.is_empty(),
            "student.vectors",
            "required when embeddings = \"pretrained\"",
        );
        let d = &self.distil;
        if let Err(m) = d.strategy.parse::<StrategyId>() {
            e.push(format!("distil.strategy: {m}"));
        }
        for (name, v) in [("alpha", d.alpha), ("beta", d.beta), ("gamma", d.gamma)] {
            check(&mut e, v.is_finite() && v >= 0.0, &format!("distil.{name}"), "must be finite and non-negative");
        }
        check(&mut e, d.patience >= 1, "distil.patience", "at least 1");
        check(&mut e, d.batch_size >= 1, "distil.batch_size", "must be positive");
        check(&mut e, d.lr_low > 0.0 && d.lr_high >= d.lr_low, "distil.lr_high", "needs lr_high >= lr_low > 0");
        check(&mut e, unit(d.holdout_fraction), "distil.holdout_fraction", "must lie in [0, 1)");
        let b = &self.bench;
        for (name, v) in [("queries", b.queries), ("seq_len", b.seq_len), ("batch_size", b.batch_size), ("runs", b.runs), ("warmup", b.warmup)] {
            check(&mut e, v > 0, &format!("bench.{name}"), "must be positive");
        }
        check(&mut e, b.seq_len <= self.vocab.max_len, "bench.seq_len", "cannot exceed vocab.max_len");
        for s in &self.sweep.strategies {
            if let Err(m) = s.parse::<StrategyId>() {
                e.push(format!("sweep.strategies: {m}"));
            }
        }
        check(&mut e, !self.sweep.seeds.is_empty(), "sweep.seeds", "at least one seed");
        if e.is_empty() {
            Ok(())
        } else {
            Err(LabError::Config(e.join("; ")))
        }
    }

    pub fn data_dir(&self, root: &Path) -> PathBuf {
        root.join(&self.data.dir)
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synthetic;
        SynthConfig {
            num_langs: s.languages,
            labeled_per_lang: s.labeled_per_lang,
            unlabeled_total: s.unlabeled,
            dev_per_lang: s.dev_per_lang,
            test_per_lang: s.test_per_lang,
            lexicon_size: s.lexicon_size,
            function_words: s.function_words,
            trigger_rate: s.trigger_rate,
            ending_rate: s.ending_rate,
            ambiguity: s.ambiguity,
            domain_overlap: s.domain_overlap,
        }
    }

    pub fn teacher_config(&self, vocab_size: usize) -> TeacherConfig {
        let t = &self.teacher;
        TeacherConfig {
            vocab_size,
            width: t.width,
            layers: t.layers,
            heads: t.heads,
            ff_width: t.ff_width,
            max_len: self.vocab.max_len,
            classes: NUM_TAGS,
            dropout: t.dropout,
            local_bias: t.local_bias,
        }
    }

    pub fn teacher_training(&self) -> TeacherTraining {
        let t = &self.teacher;
        TeacherTraining { epochs: t.epochs, batch_size: t.batch_size, lr_high: t.lr_high, lr_low: t.lr_low, piece_dropout: t.piece_dropout }
    }

    pub fn trace_layer(&self) -> usize {
        if self.teacher.trace_layer == 0 {
            self.teacher_config(1).middle_layer()
        } else {
            self.teacher.trace_layer
        }
    }

    pub fn strategy_id(&self) -> StrategyId {
        self.distil.strategy.parse().expect("validated")
    }

    pub fn strategy_spec(&self, id: StrategyId) -> StrategySpec {
        let d = &self.distil;
        let mut spec = StrategySpec::new(id);
        spec.weights = LossWeights { alpha: d.alpha, beta: d.beta, gamma: d.gamma };
        spec.patience = d.patience;
        spec.epochs_per_layer = if spec.needs_traces() { d.epochs_per_layer } else { d.baseline_epochs };
        spec
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = &self.distil;
        TrainConfig {
            batch_size: d.batch_size,
            lr_high: d.lr_high,
            lr_low: d.lr_low,
            kld: match d.kld {
                KldKind::Forward => KldDirection::TeacherToStudent,
                KldKind::Reverse => KldDirection::StudentToTeacher,
            },
            holdout_fraction: d.holdout_fraction,
            holdout_cap: d.holdout_cap,
        }
    }

    /// Student configuration for `spec`, given the vocabulary size and the
    /// traced representation width.
    pub fn student_config(&self, spec: &StrategySpec, vocab_size: usize, teacher_dim: usize) -> StudentConfig {
        let st = &self.student;
        let arch = match st.arch {
            ArchKind::Bilstm => Arch::BiLstm { hidden: st.hidden },
            ArchKind::Transformer => Arch::Transformer { depth: st.depth, ff_width: st.ff_width },
        };
        let head_input = match st.head_input {
            HeadKind::Auto => spec.head_input(),
            HeadKind::Projected => HeadInput::Projected,
            HeadKind::Hidden => HeadInput::Hidden,
        };
        let mut c = StudentConfig::bilstm(vocab_size, st.emb_dim, 1, teacher_dim);
        c.arch = arch;
        c.head_input = head_input;
        c.dropout = st.dropout;
        c
    }
}

trait IntoConfig {
    fn try_into_config(self) -> LabResult<ExperimentConfig>;
}

impl IntoConfig for toml::Table {
    fn try_into_config(self) -> LabResult<ExperimentConfig> {
        ExperimentConfig::deserialize(toml::Value::Table(self)).map_err(|e| LabError::Config(e.message().to_string()))
    }
}

/// Applies one `section.key=value` override; the value is read as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> LabResult<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        return Err(LabError::Usage(format!("override {spec:?} is not section.key=value")));
    };
    let Some((section, field)) = key.trim().split_once('.') else {
        return Err(LabError::Usage(format!("override key {key:?} needs a section")));
    };
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let Some(sec) = entry.as_table_mut() else {
        return Err(LabError::Config(format!("{section} is not a section")));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}
