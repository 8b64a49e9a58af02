//! End-to-end runs of the artifact pipeline and the command-line binary on a
//! tiny configuration.

use std::path::Path;
use std::process::Command;

use stagedistil::formats::{self, hex};
use stagedistil::{ExperimentConfig, LabError, Pipeline};

const TINY: &str = r#"
[synthetic]
languages = 2
labeled_per_lang = 16
unlabeled = 80
dev_per_lang = 8
test_per_lang = 8

[vocab]
size = 120
max_len = 20

[teacher]
layers = 2
width = 8
heads = 2
ff_width = 16
epochs = 2

[student]
emb_dim = 4
hidden = 3

[distil]
strategy = "D42"
epochs_per_layer = 1
baseline_epochs = 2
batch_size = 8

[bench]
queries = 8
runs = 2
warmup = 1
seq_len = 12
grid = [[4, 3]]

[sweep]
strategies = ["D0S", "D1"]
seeds = [1, 2]
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY).unwrap()
}

fn prepared(root: &Path) -> Pipeline {
    let mut p = Pipeline::new(root, tiny()).quiet();
    p.synth_data().unwrap();
    p.build_vocab().unwrap();
    p.train_teacher().unwrap();
    p
}

#[test]
fn missing_trace_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = prepared(dir.path());
    p.config.distil.strategy = "D1".into();
    let err = p.distil().unwrap_err();
    assert!(matches!(err, LabError::Dependency { stage: "trace", .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("`trace`"));
    // label-only baselines need no trace
    p.config.distil.strategy = "D0S".into();
    p.distil().unwrap();
}

#[test]
fn nothing_runs_before_the_corpus_exists() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(dir.path(), tiny()).quiet();
    assert!(matches!(p.build_vocab().unwrap_err(), LabError::Dependency { stage: "synth-data", .. }));
    assert!(matches!(p.train_teacher().unwrap_err(), LabError::Dependency { stage: "build-vocab", .. }));
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for root in [a.path(), b.path()] {
        let mut p = prepared(root);
        p.trace().unwrap();
        p.distil().unwrap();
    }
    for f in ["teacher.ckpt", "trace.xdtr", "vocab.txt", "runs/D42-s1.ckpt", "runs/D42-s1.history.tsv", "runs/D42-s1.layers.tsv", "runs/D42-s1.eval.tsv"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn artifacts_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = prepared(dir.path());
    p.trace().unwrap();
    let out = p.distil().unwrap();
    let h = hex(p.hash());
    let history = std::fs::read_to_string(p.run_path(&out.name, "history.tsv")).unwrap();
    assert!(history.contains(&format!("# config-hash: {h}")));
    let meta = std::fs::read_to_string(formats::meta_path(&p.trace_path())).unwrap();
    assert_eq!(meta.trim(), format!("config-hash: {h}"));
    let (_, stored) = formats::read_checkpoint(&p.run_path(&out.name, "ckpt")).unwrap();
    assert_eq!(&stored, p.hash());
    // the history reads back to what training returned
    assert_eq!(format!("{:?}", formats::read_history(&p.run_path(&out.name, "history.tsv")).unwrap()), format!("{:?}", out.history));
    let table = p.evaluate().unwrap();
    assert!(table.contains("mean F1"));
}

#[test]
fn sweep_writes_one_history_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = prepared(dir.path());
    p.trace().unwrap();
    let table = p.sweep().unwrap();
    assert_eq!(table.lines().count(), 2 + 2);
    let histories = std::fs::read_dir(dir.path().join("runs")).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".history.tsv")).count();
    assert_eq!(histories, 2 * 2);
    assert!(dir.path().join("sweep.tsv").exists());
}

#[test]
fn bench_reports_every_grid_entry() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = prepared(dir.path());
    let table = p.bench().unwrap();
    assert!(table.contains("teacher") && table.contains("bilstm E=4 H=3"));
    let records = std::fs::read_to_string(dir.path().join("bench.records")).unwrap();
    assert_eq!(records.lines().filter(|l| l.starts_with("model=")).count(), 2);
}

fn cli(root: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stagedistil")).args(args).env("STAGEDISTIL_ROOT", root).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let c = cfg.to_str().unwrap();
    let (code, err) = cli(dir.path(), &["synth-data", "-c", c, "--set", "teacher.heads=3"]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("teacher.heads"), "{err}");
    let (code, _) = cli(dir.path(), &["frobnicate"]);
    assert_eq!(code, 1);
    let (code, err) = cli(dir.path(), &["trace", "-c", c]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("train-teacher"), "{err}");
    let (code, err) = cli(dir.path(), &["synth-data", "-c", c]);
    assert_eq!(code, 0, "{err}");
    std::fs::write(dir.path().join("data/train/s00.conll"), "word\tB-XYZ\n").unwrap();
    let (code, err) = cli(dir.path(), &["build-vocab", "-c", c]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("s00.conll:1:6"), "{err}");
}
