//! Training histories as tab-separated text with a `#` provenance header.
//! Floats use the shortest representation that reads back exactly.

use std::fmt::Write as _;
use std::path::Path;

use stagedistil_core::distil::{EpochRecord, LayerRecord, Pathway, TrainHistory};

use super::text::read_lines;
use crate::error::{LabError, LabResult};

pub const EPOCH_COLUMNS: &str = "language\tstage\tlayer\tepoch\ttrain_loss\tval_loss\tdev_f1\tpathway";
pub const LAYER_COLUMNS: &str = "language\tstage\tlayer\tentry_val\tbest_val\tbest_epoch\tepochs_run";

/// `# key: value` lines written above the column header.
pub fn header(meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

fn lang(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

pub fn epochs_to_tsv(history: &TrainHistory, meta: &[(&str, String)]) -> String {
    let mut out = header(meta);
    out.push_str(EPOCH_COLUMNS);
    out.push('\n');
    for e in &history.epochs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            lang(&e.language),
            e.stage,
            e.layer,
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.dev_f1,
            e.pathway.name()
        );
    }
    out
}

pub fn layers_to_tsv(history: &TrainHistory, meta: &[(&str, String)]) -> String {
    let mut out = header(meta);
    out.push_str(LAYER_COLUMNS);
    out.push('\n');
    for l in &history.layers {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            lang(&l.language),
            l.stage,
            l.layer,
            l.entry_val,
            l.best_val,
            l.best_epoch,
            l.epochs_run
        );
    }
    out
}

fn rows<'a>(lines: &'a [String], columns: &str, path: &Path) -> LabResult<Vec<(usize, Vec<&'a str>)>> {
    let mut body = lines.iter().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
    match body.next() {
        Some((_, h)) if h == columns => {}
        _ => return Err(LabError::format(path, "missing column header")),
    }
    let width = columns.split('\t').count();
    body.map(|(i, l)| {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != width {
            return Err(LabError::Parse { path: path.to_path_buf(), line: i + 1, column: 1, msg: format!("expected {width} fields") });
        }
        Ok((i + 1, f))
    })
    .collect()
}

fn field<T: std::str::FromStr>(s: &str, path: &Path, line: usize) -> LabResult<T> {
    s.parse().map_err(|_| LabError::Parse { path: path.to_path_buf(), line, column: 1, msg: format!("bad value {s:?}") })
}

fn unlang(s: &str) -> String {
    if s == "-" {
        String::new()
    } else {
        s.to_string()
    }
}

pub fn parse_history(epochs_text: &str, layers_text: &str, path: &Path) -> LabResult<TrainHistory> {
    let lines: Vec<String> = epochs_text.lines().map(str::to_string).collect();
    let mut history = TrainHistory::default();
    for (n, f) in rows(&lines, EPOCH_COLUMNS, path)? {
        history.epochs.push(EpochRecord {
            language: unlang(f[0]),
            stage: field(f[1], path, n)?,
            layer: f[2].to_string(),
            epoch: field(f[3], path, n)?,
            train_loss: field(f[4], path, n)?,
            val_loss: field(f[5], path, n)?,
            dev_f1: field(f[6], path, n)?,
            pathway: Pathway::from_name(f[7]).ok_or_else(|| LabError::Parse {
                path: path.to_path_buf(),
                line: n,
                column: 1,
                msg: format!("unknown pathway {:?}", f[7]),
            })?,
        });
    }
    let lines: Vec<String> = layers_text.lines().map(str::to_string).collect();
    for (n, f) in rows(&lines, LAYER_COLUMNS, path)? {
        history.layers.push(LayerRecord {
            language: unlang(f[0]),
            stage: field(f[1], path, n)?,
            layer: f[2].to_string(),
            entry_val: field(f[3], path, n)?,
            best_val: field(f[4], path, n)?,
            best_epoch: field(f[5], path, n)?,
            epochs_run: field(f[6], path, n)?,
        });
    }
    Ok(history)
}

/// Companion layer-summary path: `x.history.tsv` → `x.layers.tsv`.
pub fn layers_path(history_path: &Path) -> std::path::PathBuf {
    let name = history_path.file_name().and_then(|n| n.to_str()).unwrap_or("history.tsv");
    let stem = name.strip_suffix(".history.tsv").unwrap_or(name.trim_end_matches(".tsv"));
    history_path.with_file_name(format!("{stem}.layers.tsv"))
}

pub fn write_history(path: &Path, history: &TrainHistory, meta: &[(&str, String)]) -> LabResult<()> {
    super::text::write_file(path, epochs_to_tsv(history, meta).as_bytes())?;
    super::text::write_file(&layers_path(path), layers_to_tsv(history, meta).as_bytes())
}

pub fn read_history(path: &Path) -> LabResult<TrainHistory> {
    let epochs = read_lines(path)?.join("\n");
    let layers = read_lines(&layers_path(path))?.join("\n");
    parse_history(&epochs, &layers, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_nan_and_exact_floats() {
        let h = TrainHistory {
            epochs: vec![
                EpochRecord { language: String::new(), stage: 1, layer: "all".into(), epoch: 0, train_loss: f64::NAN, val_loss: 0.1 + 0.2, dev_f1: f64::NAN, pathway: Pathway::None },
                EpochRecord { language: "s01".into(), stage: 2, layer: "logit_head".into(), epoch: 1, train_loss: 1e-300, val_loss: 3.0, dev_f1: 0.5, pathway: Pathway::LogitHead },
            ],
            layers: vec![LayerRecord { language: String::new(), stage: 1, layer: "all".into(), entry_val: 2.0, best_val: 1.0 / 3.0, best_epoch: 4, epochs_run: 7 }],
        };
        let meta = [("config-hash", "00".to_string())];
        let back = parse_history(&epochs_to_tsv(&h, &meta), &layers_to_tsv(&h, &meta), Path::new("h")).unwrap();
        assert_eq!(back.layers, h.layers);
        assert_eq!(back.epochs[1], h.epochs[1]);
        assert!(back.epochs[0].train_loss.is_nan());
        assert_eq!(back.epochs[0].val_loss, 0.1 + 0.2);
    }

    #[test]
    fn layers_path_follows_history_name() {
        assert_eq!(layers_path(Path::new("a/D42-s1.history.tsv")), Path::new("a/D42-s1.layers.tsv"));
    }
}
