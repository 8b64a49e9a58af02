//! Line-oriented text artifacts: vocabularies, CoNLL files, transfer
//! sentences and pretrained word vectors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use stagedistil_core::data::{TaggedSentence, UnlabeledSentence};
use stagedistil_core::tokenizer::{Tag, WordPieceVocab};

use crate::error::{LabError, LabResult};

/// Reads a file and splits it into UTF-8 lines, reporting the first invalid
/// line by number.
pub fn read_lines(path: &Path) -> LabResult<Vec<String>> {
    let bytes = std::fs::read(path).map_err(LabError::io(path))?;
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        match std::str::from_utf8(raw) {
            Ok(s) => lines.push(s.to_string()),
            Err(e) => {
                return Err(LabError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    column: e.valid_up_to() + 1,
                    msg: "invalid UTF-8".into(),
                })
            }
        }
    }
    // a trailing newline leaves one empty element behind
    if bytes.ends_with(b"\n") {
        lines.pop();
    }
    Ok(lines)
}

pub fn write_file(path: &Path, contents: &[u8]) -> LabResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        }
    }
    std::fs::write(path, contents).map_err(LabError::io(path))
}

/// One piece per line, line number (from 0) = id.
pub fn vocab_to_string(vocab: &WordPieceVocab) -> String {
    let mut out = String::new();
    for p in vocab.pieces() {
        out.push_str(p);
        out.push('\n');
    }
    out
}

pub fn read_vocab(path: &Path) -> LabResult<WordPieceVocab> {
    let lines = read_lines(path)?;
    WordPieceVocab::from_pieces(lines).map_err(|e| LabError::format(path, e.to_string()))
}

pub fn write_vocab(path: &Path, vocab: &WordPieceVocab) -> LabResult<()> {
    write_file(path, vocab_to_string(vocab).as_bytes())
}

/// Parses `token<TAB>tag` lines with blank-line sentence breaks. Blocks that
/// start with `-DOCSTART-` are skipped and stray `I-X` tags become `B-X`.
pub fn parse_conll_str(text: &str, language: &str, path: &Path) -> LabResult<Vec<TaggedSentence>> {
    let err = |line: usize, column: usize, msg: String| LabError::Parse { path: path.to_path_buf(), line, column, msg };
    let mut out = Vec::new();
    let mut words = Vec::new();
    let mut tags = Vec::new();
    let mut start_line = 0;
    let mut flush = |words: &mut Vec<String>, tags: &mut Vec<Tag>, start: usize| -> LabResult<()> {
        if words.is_empty() {
            return Ok(());
        }
        let w = std::mem::take(words);
        let t = std::mem::take(tags);
        if w[0] == "-DOCSTART-" {
            return Ok(());
        }
        let s = TaggedSentence::new(w, t, language).map_err(|e| err(start, 1, e.to_string()))?;
        out.push(s);
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut words, &mut tags, start_line)?;
            continue;
        }
        if words.is_empty() {
            start_line = n;
        }
        let Some((token, rest)) = line.split_once('\t') else {
            return Err(err(n, line.chars().count() + 1, "missing tag column".into()));
        };
        let tag_text = rest.rsplit('\t').next().unwrap_or(rest).trim();
        if token.is_empty() {
            return Err(err(n, 1, "empty token".into()));
        }
        let column = line.len() - tag_text.len() + 1;
        if tag_text.is_empty() {
            return Err(err(n, column, "missing tag column".into()));
        }
        let tag: Tag = tag_text.parse().map_err(|_| err(n, column, format!("unknown tag {tag_text:?}")))?;
        if !tag.is_iob2() {
            return Err(err(n, column, format!("{tag_text} is not a word-level IOB2 tag")));
        }
        words.push(token.to_string());
        tags.push(tag);
    }
    flush(&mut words, &mut tags, start_line)?;
    Ok(out)
}

pub fn parse_conll(path: &Path, language: &str) -> LabResult<Vec<TaggedSentence>> {
    let text = read_lines(path)?.join("\n");
    parse_conll_str(&text, language, path)
}

pub fn conll_to_string(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (w, t) in s.words.iter().zip(&s.tags) {
            let _ = writeln!(out, "{w}\t{t}");
        }
        out.push('\n');
    }
    out
}

/// One whitespace-tokenized sentence per line; blank lines are skipped.
pub fn parse_unlabeled(path: &Path, language: &str) -> LabResult<Vec<UnlabeledSentence>> {
    Ok(read_lines(path)?
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| UnlabeledSentence { words: l.split_whitespace().map(str::to_string).collect(), language: language.to_string() })
        .collect())
}

pub fn unlabeled_to_string(sentences: &[UnlabeledSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.words.join(" "));
        out.push('\n');
    }
    out
}

/// Word vectors as `word v1 … vD` lines. A leading `count dim` header line is
/// accepted and checked.
pub fn parse_word_vectors(path: &Path) -> LabResult<BTreeMap<String, Vec<f64>>> {
    let lines = read_lines(path)?;
    let mut out = BTreeMap::new();
    let mut dim = None;
    let mut expected_count = None;
    for (i, line) in lines.iter().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            expected_count = Some(fields[0].parse::<usize>().expect("checked"));
            dim = Some(fields[1].parse::<usize>().expect("checked"));
            continue;
        }
        let values: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let values = values.map_err(|e| LabError::Parse { path: path.to_path_buf(), line: n, column: 1, msg: e.to_string() })?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(LabError::Parse {
                path: path.to_path_buf(),
                line: n,
                column: 1,
                msg: format!("expected {d} values, found {}", values.len()),
            });
        }
        out.insert(fields[0].to_string(), values);
    }
    if let Some(c) = expected_count {
        if c != out.len() {
            return Err(LabError::format(path, format!("header promises {c} vectors, found {}", out.len())));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.conll")
    }

    #[test]
    fn single_token_sentence() {
        let s = parse_conll_str("John\tB-PER\n\n", "xx", p()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].words, ["John"]);
        assert_eq!(s[0].tags, [Tag::BPer]);
    }

    #[test]
    fn stray_inside_is_repaired() {
        let s = parse_conll_str("a\tI-ORG\n\n", "xx", p()).unwrap();
        assert_eq!(s[0].tags, [Tag::BOrg]);
    }

    #[test]
    fn three_blocks() {
        let text = "a\tO\nb\tB-LOC\n\nc\tO\n\n\nd\tB-PER\ne\tI-PER\n";
        assert_eq!(parse_conll_str(text, "xx", p()).unwrap().len(), 3);
    }

    #[test]
    fn docstart_is_skipped() {
        let text = "-DOCSTART-\tO\n\na\tO\n";
        assert_eq!(parse_conll_str(text, "xx", p()).unwrap().len(), 1);
    }

    #[test]
    fn missing_tag_reports_line() {
        match parse_conll_str("a\tO\nbroken\n", "xx", p()) {
            Err(LabError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 7)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_tag_reports_column() {
        match parse_conll_str("word\tB-MISC\n", "xx", p()) {
            Err(LabError::Parse { line, column, .. }) => assert_eq!((line, column), (1, 6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conll_round_trip() {
        let text = "a\tO\nb\tB-LOC\nc\tI-LOC\n\nd\tB-PER\n\n";
        let s = parse_conll_str(text, "xx", p()).unwrap();
        assert_eq!(conll_to_string(&s), text);
    }
}
