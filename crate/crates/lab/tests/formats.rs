//! Round trips of the file formats on generated content.

use std::path::Path;

use proptest::prelude::*;
use stagedistil::formats::text::{conll_to_string, parse_conll_str};
use stagedistil::formats::trace::{read_trace_from, write_trace_to};
use stagedistil::formats::{parse_word_vectors, read_vocab, write_vocab};
use stagedistil::ExperimentConfig;
use stagedistil_core::data::TaggedSentence;
use stagedistil_core::teacher::{TeacherTrace, TraceRecord};
use stagedistil_core::tokenizer::{Tag, WordPieceVocab};

const WORD_TAGS: [Tag; 7] = [Tag::O, Tag::BPer, Tag::IPer, Tag::BOrg, Tag::IOrg, Tag::BLoc, Tag::ILoc];

fn sentence() -> impl Strategy<Value = (Vec<String>, Vec<Tag>)> {
    prop::collection::vec(("[a-zA-Z]{1,6}", prop::sample::select(WORD_TAGS.to_vec())), 1..8)
        .prop_map(|pairs| pairs.into_iter().unzip())
}

proptest! {
    #[test]
    fn conll_round_trip(sents in prop::collection::vec(sentence(), 1..5)) {
        let sents: Vec<TaggedSentence> = sents.into_iter().map(|(w, t)| TaggedSentence::new(w, t, "xx").unwrap()).collect();
        let back = parse_conll_str(&conll_to_string(&sents), "xx", Path::new("m")).unwrap();
        prop_assert_eq!(back, sents);
    }

    #[test]
    fn trace_round_trip(lens in prop::collection::vec(0usize..6, 0..5), seed in any::<u32>()) {
        let (c, d) = (3, 2);
        let f = |i: usize| ((seed as usize + i) % 97) as f32 / 7.0 - 5.0;
        let records = lens.iter().enumerate().map(|(n, &k)| TraceRecord {
            ids: (0..k as u32).map(|i| i + n as u32).collect(),
            logits: (0..k * c).map(f).collect(),
            reps: (0..k * d).map(|i| f(i + 3)).collect(),
        }).collect();
        let t = TeacherTrace { classes: c, dim: d, layer: 2, records };
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &t).unwrap();
        prop_assert_eq!(read_trace_from(&buf[..]).unwrap(), t);
    }

    #[test]
    fn overrides_reach_the_config(seed in 0u64..1000, epochs in 1usize..50) {
        let cfg = ExperimentConfig::load(None, &[format!("distil.seed={seed}"), format!("teacher.epochs = {epochs}")]).unwrap();
        prop_assert_eq!((cfg.distil.seed, cfg.teacher.epochs), (seed, epochs));
        prop_assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn vocab_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    let pieces = ["[CLS]", "[SEP]", "[PAD]", "[UNK]", "ab", "##c"].map(String::from).to_vec();
    let v = WordPieceVocab::from_pieces(pieces).unwrap();
    write_vocab(&path, &v).unwrap();
    assert_eq!(read_vocab(&path).unwrap(), v);
}

#[test]
fn word_vectors_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vec.txt");
    std::fs::write(&path, "2 2\nthe 0.1 0.2\nof -1 3\n").unwrap();
    let v = parse_word_vectors(&path).unwrap();
    assert_eq!(v["the"], [0.1, 0.2]);
    std::fs::write(&path, "the 0.1 0.2\nof 1\n").unwrap();
    assert!(parse_word_vectors(&path).unwrap_err().to_string().contains(":2:"));
}
