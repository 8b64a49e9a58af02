//! The experiment commands. Each reads and writes fixed artifact paths
//! under a root directory; a missing input names the command that makes it.
//!
//! ```text
//! <root>/data/{train,dev,test}/<lang>.conll   labeled splits, one file per language
//! <root>/data/unlabeled/*.txt                 transfer sentences, concatenated in name order
//! <root>/vocab.txt                            WordPiece vocabulary
//! <root>/teacher.ckpt                         fine-tuned teacher
//! <root>/trace.xdtr                           teacher outputs on the transfer set
//! <root>/runs/<run>.{ckpt,history.tsv,layers.tsv,eval.tsv}
//! <root>/bench.{txt,records}, <root>/sweep.{txt,tsv}
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagedistil_core::data::{encode_unlabeled, generate_synthetic, subsample_labeled, Corpus, EncodedSet};
use stagedistil_core::distil::{evaluate_students, evaluate_teacher, run_strategy, DistilData, StrategyId, TrainHistory};
use stagedistil_core::eval::{aggregate_languages, EvalReport};
use stagedistil_core::models::{init_embeddings, EmbeddingInit, StudentConfig, StudentModel, TeacherModel};
use stagedistil_core::teacher::{finetune_teacher, trace_transfer_set, TeacherTrace};
use stagedistil_core::tokenizer::{build_vocab, count_words, WordPieceVocab};

use crate::bench::{compression_report, BenchModel, LatencySettings};
use crate::config::{ArchKind, EmbeddingKind, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::formats::{self, history, report, text, Checkpoint, ConfigHash};

/// Environment variable naming the artifact root.
pub const ROOT_ENV: &str = "STAGEDISTIL_ROOT";

pub fn default_root() -> PathBuf {
    std::env::var_os(ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("artifacts"))
}

pub struct Pipeline {
    pub root: PathBuf,
    pub config: ExperimentConfig,
    hash: ConfigHash,
    /// Progress lines go here; tests pass a sink.
    log: Box<dyn FnMut(&str)>,
}

const SPLITS: [&str; 3] = ["train", "dev", "test"];

fn require(path: &Path, what: &str, stage: &'static str) -> LabResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(LabError::Dependency { what: what.to_string(), stage, path: path.to_path_buf() })
    }
}

/// Sorted `*.ext` files of `dir`.
fn files_with_ext(dir: &Path, ext: &str) -> LabResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(LabError::io(dir))? {
        let p = entry.map_err(LabError::io(dir))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Result of one distillation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub name: String,
    pub report: EvalReport,
    pub history: TrainHistory,
}

impl Pipeline {
    pub fn new(root: impl Into<PathBuf>, config: ExperimentConfig) -> Self {
        let hash = config.hash();
        Self { root: root.into(), config, hash, log: Box::new(|m| eprintln!("{m}")) }
    }

    pub fn quiet(mut self) -> Self {
        self.log = Box::new(|_| {});
        self
    }

    fn say(&mut self, msg: &str) {
        (self.log)(msg)
    }

    pub fn hash(&self) -> &ConfigHash {
        &self.hash
    }

    fn header(&self, kind: &str) -> Vec<(&'static str, String)> {
        vec![("artifact", kind.to_string()), ("config-hash", formats::hex(&self.hash))]
    }

    fn header_text(&self, kind: &str) -> String {
        history::header(&self.header(kind))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.config.data_dir(&self.root)
    }
    pub fn vocab_path(&self) -> PathBuf {
        self.root.join("vocab.txt")
    }
    pub fn teacher_path(&self) -> PathBuf {
        self.root.join("teacher.ckpt")
    }
    pub fn trace_path(&self) -> PathBuf {
        self.root.join("trace.xdtr")
    }

    /// `D42-s3`, with `-t2000` appended when a transfer prefix is used and
    /// `-l20` when the labeled set is subsampled.
    pub fn run_name(&self, id: StrategyId, seed: u64, transfer: usize) -> String {
        let mut name = format!("{id}-s{seed}");
        if transfer > 0 {
            let _ = write!(name, "-t{transfer}");
        }
        if self.config.data.labels_per_lang > 0 {
            let _ = write!(name, "-l{}", self.config.data.labels_per_lang);
        }
        name
    }

    pub fn run_path(&self, name: &str, ext: &str) -> PathBuf {
        self.root.join("runs").join(format!("{name}.{ext}"))
    }

    // ---- synth-data

    pub fn synth_data(&mut self) -> LabResult<()> {
        let corpus = generate_synthetic(&self.config.synth_config(), self.config.synthetic.seed);
        let dir = self.data_dir();
        for (split, sents) in SPLITS.iter().zip([&corpus.labeled, &corpus.dev, &corpus.test]) {
            for lang in corpus.languages() {
                let own: Vec<_> = sents.iter().filter(|s| s.language == lang).cloned().collect();
                let path = dir.join(split).join(format!("{lang}.conll"));
                text::write_file(&path, text::conll_to_string(&own).as_bytes())?;
                formats::write_meta(&path, &self.hash)?;
            }
        }
        let path = dir.join("unlabeled").join("transfer.txt");
        text::write_file(&path, text::unlabeled_to_string(&corpus.unlabeled).as_bytes())?;
        formats::write_meta(&path, &self.hash)?;
        let msg = format!(
            "synth-data: {} languages, {} labeled / {} dev / {} test sentences, {} transfer sentences in {}",
            corpus.languages().len(),
            corpus.labeled.len(),
            corpus.dev.len(),
            corpus.test.len(),
            corpus.unlabeled.len(),
            dir.display()
        );
        self.say(&msg);
        Ok(())
    }

    /// Reads the corpus directory; the unlabeled set may be absent.
    pub fn load_corpus(&self) -> LabResult<Corpus> {
        let dir = self.data_dir();
        let train = dir.join("train");
        require(&train, "labeled training data", "synth-data")?;
        let mut corpus = Corpus::default();
        for (split, target) in SPLITS.iter().zip([&mut corpus.labeled, &mut corpus.dev, &mut corpus.test]) {
            let d = dir.join(split);
            require(&d, &format!("{split} split"), "synth-data")?;
            for f in files_with_ext(&d, "conll")? {
                target.extend(text::parse_conll(&f, &stem(&f))?);
            }
        }
        let unl = dir.join("unlabeled");
        if unl.exists() {
            for f in files_with_ext(&unl, "txt")? {
                corpus.unlabeled.extend(text::parse_unlabeled(&f, &stem(&f))?);
            }
        }
        if corpus.labeled.is_empty() {
            return Err(LabError::format(&train, "no labeled sentences"));
        }
        Ok(corpus)
    }

    // ---- build-vocab

    pub fn build_vocab(&mut self) -> LabResult<WordPieceVocab> {
        let corpus = self.load_corpus()?;
        let vocab = build_vocab(&count_words(corpus.all_words()), self.config.vocab.size)?;
        let path = self.vocab_path();
        text::write_vocab(&path, &vocab)?;
        formats::write_meta(&path, &self.hash)?;
        let msg = format!("build-vocab: {} pieces in {}", vocab.len(), path.display());
        self.say(&msg);
        Ok(vocab)
    }

    pub fn load_vocab(&self) -> LabResult<WordPieceVocab> {
        let path = self.vocab_path();
        require(&path, "vocabulary", "build-vocab")?;
        text::read_vocab(&path)
    }

    fn encode(&self, corpus: &Corpus, vocab: &WordPieceVocab) -> LabResult<(EncodedSet, EncodedSet, EncodedSet)> {
        let m = self.config.vocab.max_len;
        Ok((EncodedSet::encode(&corpus.labeled, vocab, m)?, EncodedSet::encode(&corpus.dev, vocab, m)?, EncodedSet::encode(&corpus.test, vocab, m)?))
    }

    // ---- train-teacher

    pub fn train_teacher(&mut self) -> LabResult<(TeacherModel, EvalReport)> {
        let vocab = self.load_vocab()?;
        let corpus = self.load_corpus()?;
        let (train, dev, test) = self.encode(&corpus, &vocab)?;
        let tcfg = self.config.teacher_config(vocab.len());
        let (teacher, epochs) = finetune_teacher(&train.examples, &dev.examples, tcfg, self.config.teacher_training(), self.config.teacher.seed)?;
        formats::write_checkpoint(&self.teacher_path(), &Checkpoint::Teacher(teacher.clone()), &self.hash)?;
        let mut hist = self.header_text("teacher-history");
        hist.push_str("epoch\ttrain_loss\tdev_loss\n");
        for e in &epochs {
            let _ = writeln!(hist, "{}\t{}\t{}", e.epoch, e.train_loss, e.dev_loss);
        }
        text::write_file(&self.root.join("teacher.history.tsv"), hist.as_bytes())?;
        let dev_report = evaluate_teacher(&teacher, &dev)?;
        let test_report = evaluate_teacher(&teacher, &test)?;
        text::write_file(&self.root.join("teacher.eval.tsv"), report::report_tsv(&test_report, &self.header_text("teacher-eval")).as_bytes())?;
        let msg = format!(
            "train-teacher: {} parameters, dev F1 {:.4}, test F1 {:.4}",
            teacher.param_count(),
            dev_report.mean_f1,
            test_report.mean_f1
        );
        self.say(&msg);
        Ok((teacher, dev_report))
    }

    pub fn load_teacher(&self) -> LabResult<TeacherModel> {
        let path = self.teacher_path();
        require(&path, "teacher checkpoint", "train-teacher")?;
        formats::read_teacher(&path)
    }

    // ---- trace

    pub fn trace(&mut self) -> LabResult<TeacherTrace> {
        let teacher = self.load_teacher()?;
        let vocab = self.load_vocab()?;
        let corpus = self.load_corpus()?;
        if corpus.unlabeled.is_empty() {
            return Err(LabError::Dependency { what: "transfer sentences".into(), stage: "synth-data", path: self.data_dir().join("unlabeled") });
        }
        let unl = encode_unlabeled(&corpus.unlabeled, &vocab, self.config.vocab.max_len)?;
        let trace = trace_transfer_set(&teacher, &unl, self.config.trace_layer())?;
        let path = self.trace_path();
        formats::write_trace(&path, &trace)?;
        formats::write_meta(&path, &self.hash)?;
        let msg = format!("trace: {} sentences from layer {} in {}", trace.records.len(), trace.layer, path.display());
        self.say(&msg);
        Ok(trace)
    }

    pub fn load_trace(&self) -> LabResult<TeacherTrace> {
        let path = self.trace_path();
        require(&path, "teacher trace", "trace")?;
        formats::read_trace(&path)
    }

    // ---- distil

    fn student_embeddings(&self, scfg: &StudentConfig, vocab: &WordPieceVocab, seed: u64) -> LabResult<Option<stagedistil_core::nn::Tensor>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e4b0);
        Ok(match self.config.student.embeddings {
            EmbeddingKind::Random => None,
            EmbeddingKind::Svd => {
                let teacher = self.load_teacher()?;
                Some(init_embeddings(EmbeddingInit::Svd(teacher.embeddings()), vocab, scfg.emb_dim, &mut rng)?)
            }
            EmbeddingKind::Pretrained => {
                let p = PathBuf::from(&self.config.student.vectors);
                let p = if p.is_absolute() { p } else { self.root.join(p) };
                require(&p, "word vectors", "an external embedding export")?;
                let vectors = text::parse_word_vectors(&p)?;
                Some(init_embeddings(EmbeddingInit::Pretrained(&vectors), vocab, scfg.emb_dim, &mut rng)?)
            }
        })
    }

    /// Trains one strategy under `seed` with the first `transfer` traces
    /// (0 keeps all), writing checkpoint, history and test scores.
    pub fn distil_run(&mut self, id: StrategyId, seed: u64, transfer: usize) -> LabResult<RunOutcome> {
        let spec = self.config.strategy_spec(id);
        let vocab = self.load_vocab()?;
        let trace = if spec.needs_traces() {
            let t = self.load_trace()?;
            Some(if transfer > 0 { t.prefix(transfer) } else { t })
        } else {
            None
        };
        let mut corpus = self.load_corpus()?;
        if self.config.data.labels_per_lang > 0 {
            corpus = subsample_labeled(&corpus, self.config.data.labels_per_lang, self.config.data.subsample_seed)?;
        }
        let (train, dev, test) = self.encode(&corpus, &vocab)?;
        let teacher_dim = trace.as_ref().map(|t| t.dim).unwrap_or(self.config.teacher.width);
        let scfg = self.config.student_config(&spec, vocab.len(), teacher_dim);
        let emb = self.student_embeddings(&scfg, &vocab, seed)?;
        let data = DistilData { labeled: &train, dev: &dev, traces: trace.as_ref() };
        let (students, hist) = run_strategy(&spec, data, &scfg, emb.as_ref(), &self.config.train_config(), seed)?;
        let report = evaluate_students(&students, &test)?;
        let name = self.run_name(id, seed, transfer);
        formats::write_checkpoint(&self.run_path(&name, "ckpt"), &Checkpoint::Students(students), &self.hash)?;
        let mut meta = self.header("history");
        meta.push(("run", name.clone()));
        history::write_history(&self.run_path(&name, "history.tsv"), &hist, &meta)?;
        text::write_file(&self.run_path(&name, "eval.tsv"), report::report_tsv(&report, &self.header_text("eval")).as_bytes())?;
        let msg = format!("distil {name}: test F1 {:.4} (σ {:.4})", report.mean_f1, report.std_f1);
        self.say(&msg);
        Ok(RunOutcome { name, report, history: hist })
    }

    pub fn distil(&mut self) -> LabResult<RunOutcome> {
        let (id, seed, t) = (self.config.strategy_id(), self.config.distil.seed, self.config.data.transfer_size);
        self.distil_run(id, seed, t)
    }

    // ---- evaluate

    pub fn evaluate(&mut self) -> LabResult<String> {
        let (id, seed, t) = (self.config.strategy_id(), self.config.distil.seed, self.config.data.transfer_size);
        let name = self.run_name(id, seed, t);
        let ckpt = self.run_path(&name, "ckpt");
        require(&ckpt, &format!("student checkpoint {name}"), "distil")?;
        let students = formats::read_students(&ckpt)?;
        let vocab = self.load_vocab()?;
        let corpus = self.load_corpus()?;
        let (_, _, test) = self.encode(&corpus, &vocab)?;
        let report = evaluate_students(&students, &test)?;
        text::write_file(&self.run_path(&name, "eval.tsv"), report::report_tsv(&report, &self.header_text("eval")).as_bytes())?;
        Ok(report::report_table(&name, &report))
    }

    // ---- bench

    pub fn latency_settings(&self) -> LatencySettings {
        let b = &self.config.bench;
        LatencySettings { batch_size: b.batch_size, queries: b.queries, seq_len: b.seq_len, runs: b.runs, warmup: b.warmup, seed: 0 }
    }

    /// Teacher against freshly initialised students from the bench grid;
    /// timing does not depend on trained weights.
    pub fn bench(&mut self) -> LabResult<String> {
        let teacher = self.load_teacher()?;
        let spec = self.config.strategy_spec(self.config.strategy_id());
        let mut students = Vec::new();
        for &[e, x] in &self.config.bench.grid {
            let mut cfg = self.config.clone();
            cfg.student.arch = self.config.bench.grid_arch;
            cfg.student.emb_dim = e;
            let label = match cfg.student.arch {
                ArchKind::Bilstm => {
                    cfg.student.hidden = x;
                    format!("bilstm E={e} H={x}")
                }
                ArchKind::Transformer => {
                    cfg.student.depth = x;
                    format!("transformer E={e} depth={x}")
                }
            };
            let scfg = cfg.student_config(&spec, teacher.config.vocab_size, teacher.config.width);
            students.push((label, StudentModel::new(scfg, &mut ChaCha8Rng::seed_from_u64(0))?));
        }
        let refs: Vec<(String, BenchModel)> = students.iter().map(|(n, m)| (n.clone(), BenchModel::Student(m))).collect();
        let report = compression_report(BenchModel::Teacher(&teacher), &refs, &self.latency_settings())?;
        let table = report.table();
        text::write_file(&self.root.join("bench.txt"), table.as_bytes())?;
        text::write_file(&self.root.join("bench.records"), report.records(&self.header_text("bench")).as_bytes())?;
        Ok(table)
    }

    // ---- sweep

    /// Strategy × seed × transfer-size grid; returns the summary table.
    pub fn sweep(&mut self) -> LabResult<String> {
        let ids: Vec<StrategyId> = self.config.sweep.strategies.iter().map(|s| s.parse().expect("validated")).collect();
        let seeds = self.config.sweep.seeds.clone();
        let sizes = self.config.sweep.transfer_sizes.clone();
        let mut rows = vec![["strategy", "transfer", "mean F1", "σ over seeds", "per seed"].map(String::from).to_vec()];
        let mut tsv = self.header_text("sweep");
        tsv.push_str("strategy\ttransfer\tseed\tmean_f1\tstd_f1\n");
        for &size in &sizes {
            for &id in &ids {
                let mut f1s = Vec::new();
                for &seed in &seeds {
                    let out = self.distil_run(id, seed, size)?;
                    let _ = writeln!(tsv, "{id}\t{size}\t{seed}\t{}\t{}", out.report.mean_f1, out.report.std_f1);
                    f1s.push(out.report.mean_f1);
                }
                let (mean, sd) = aggregate_languages(&f1s)?;
                let per: Vec<String> = f1s.iter().map(|f| format!("{:.2}", 100.0 * f)).collect();
                let size_label = if size == 0 { "all".to_string() } else { size.to_string() };
                rows.push(vec![id.to_string(), size_label, format!("{:.2}", 100.0 * mean), format!("{:.2}", 100.0 * sd), per.join(" ")]);
            }
        }
        let table = report::table(&rows);
        text::write_file(&self.root.join("sweep.tsv"), tsv.as_bytes())?;
        text::write_file(&self.root.join("sweep.txt"), table.as_bytes())?;
        Ok(table)
    }
}
