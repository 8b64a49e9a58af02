use alloc::string::String;
use alloc::vec::Vec;

use super::tags::Tag;
use super::vocab::{normalize_word, tokenize, WordPieceVocab};
use crate::data::TaggedSentence;
use crate::error::{bail, Result};

/// A sentence laid out as `[CLS] pieces… [SEP] [PAD]…` of fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub ids: Vec<u32>,
    /// Piece-level tags; `None` for unlabeled sentences.
    pub tags: Option<Vec<Tag>>,
    pub word_starts: Vec<bool>,
    /// Number of non-`[PAD]` positions, including `[CLS]` and `[SEP]`.
    pub len: usize,
    /// Word count of the source sentence, including words lost to truncation.
    pub word_count: usize,
    pub language: String,
}

impl EncodedExample {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    pub fn content(&self) -> &[u32] {
        &self.ids[..self.len]
    }
}

fn layout(
    words: &[String],
    word_tags: Option<&[Tag]>,
    vocab: &WordPieceVocab,
    max_len: usize,
    language: &str,
) -> Result<EncodedExample> {
    if max_len < 3 {
        bail!(Config, "max_len must be at least 3, got {}", max_len);
    }
    if words.is_empty() {
        bail!(Data, "cannot encode an empty sentence");
    }
    let capacity = max_len - 2;
    let mut ids = Vec::with_capacity(max_len);
    let mut tags = Vec::with_capacity(max_len);
    let mut starts = Vec::with_capacity(max_len);
    ids.push(WordPieceVocab::CLS_ID);
    tags.push(Tag::Cls);
    starts.push(false);
    'words: for (wi, w) in words.iter().enumerate() {
        let pieces = tokenize(&normalize_word(w), vocab);
        for (pi, id) in pieces.into_iter().enumerate() {
            if ids.len() - 1 == capacity {
                break 'words;
            }
            ids.push(id);
            starts.push(pi == 0);
            tags.push(match (pi, word_tags) {
                (0, Some(t)) => t[wi],
                (_, Some(_)) => Tag::X,
                _ => Tag::Pad,
            });
        }
    }
    ids.push(WordPieceVocab::SEP_ID);
    tags.push(Tag::Sep);
    starts.push(false);
    let len = ids.len();
    ids.resize(max_len, WordPieceVocab::PAD_ID);
    tags.resize(max_len, Tag::Pad);
    starts.resize(max_len, false);
    Ok(EncodedExample {
        ids,
        tags: word_tags.map(|_| tags),
        word_starts: starts,
        len,
        word_count: words.len(),
        language: language.into(),
    })
}

/// Encodes a labeled sentence. The first piece of each word carries the word
/// tag, continuation pieces carry `X`; overflow is truncated keeping `[SEP]`.
pub fn encode_sentence(sent: &TaggedSentence, vocab: &WordPieceVocab, max_len: usize) -> Result<EncodedExample> {
    if sent.words.len() != sent.tags.len() {
        bail!(Data, "sentence has {} words but {} tags", sent.words.len(), sent.tags.len());
    }
    if let Some((i, t)) = sent.tags.iter().enumerate().find(|(_, t)| !t.is_iob2()) {
        bail!(Data, "word {} carries non-IOB2 gold tag {}", i, t);
    }
    layout(&sent.words, Some(&sent.tags), vocab, max_len, &sent.language)
}

/// Encodes an unlabeled word sequence.
pub fn encode_words(words: &[String], vocab: &WordPieceVocab, max_len: usize, language: &str) -> Result<EncodedExample> {
    layout(words, None, vocab, max_len, language)
}

/// Word-level tags from piece-level predictions: each word takes the
/// prediction at its first piece; non-IOB2 predictions there become `O`, and
/// words lost to truncation are `O`.
pub fn align_predictions(example: &EncodedExample, piece_tags: &[Tag]) -> Vec<Tag> {
    assert_eq!(piece_tags.len(), example.ids.len(), "prediction length");
    let mut out: Vec<Tag> = example
        .word_starts
        .iter()
        .zip(piece_tags)
        .filter(|(s, _)| **s)
        .map(|(_, &t)| if t.is_iob2() { t } else { Tag::O })
        .collect();
    out.resize(example.word_count, Tag::O);
    out
}
