//! Labeled and unlabeled corpora, the synthetic multilingual generator,
//! low-resource subsampling and batch construction.

mod batch;
mod synth;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{check_trace_alignment, Batch, BatchIter, BatchMode, Step};
pub use synth::{generate_synthetic, SynthConfig};

use crate::error::{bail, Result};
use crate::tokenizer::{encode_sentence, encode_words, repair_iob2, EncodedExample, Tag, WordPieceVocab};

/// A word sequence with word-level IOB2 tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: Vec<Tag>,
    pub language: String,
}

impl TaggedSentence {
    /// Validates lengths and tag kinds, then repairs stray `I-X` tags.
    pub fn new(words: Vec<String>, mut tags: Vec<Tag>, language: impl Into<String>) -> Result<Self> {
        if words.len() != tags.len() {
            bail!(Data, "{} words but {} tags", words.len(), tags.len());
        }
        if let Some(t) = tags.iter().find(|t| !t.is_iob2()) {
            bail!(Data, "tag {} is not a word-level IOB2 tag", t);
        }
        repair_iob2(&mut tags);
        Ok(Self { words, tags, language: language.into() })
    }
}

/// An unlabeled transfer-set sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlabeledSentence {
    pub words: Vec<String>,
    pub language: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub labeled: Vec<TaggedSentence>,
    pub unlabeled: Vec<UnlabeledSentence>,
    pub dev: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
}

impl Corpus {
    /// Sorted language codes present in any split.
    pub fn languages(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        for s in self.labeled.iter().chain(&self.dev).chain(&self.test) {
            set.insert(s.language.clone());
        }
        for s in &self.unlabeled {
            set.insert(s.language.clone());
        }
        set.into_iter().collect()
    }

    /// Words of every split, for vocabulary construction.
    pub fn all_words(&self) -> impl Iterator<Item = &str> {
        self.labeled
            .iter()
            .chain(&self.dev)
            .chain(&self.test)
            .flat_map(|s| s.words.iter())
            .chain(self.unlabeled.iter().flat_map(|s| s.words.iter()))
            .map(String::as_str)
    }

    /// Restricts every labeled split to one language; the unlabeled set is kept.
    pub fn only_language(&self, lang: &str) -> Corpus {
        let keep = |v: &[TaggedSentence]| v.iter().filter(|s| s.language == lang).cloned().collect();
        Corpus { labeled: keep(&self.labeled), unlabeled: self.unlabeled.clone(), dev: keep(&self.dev), test: keep(&self.test) }
    }

    /// Keeps the first `n` unlabeled sentences.
    pub fn with_transfer_size(&self, n: usize) -> Corpus {
        let mut c = self.clone();
        c.unlabeled.truncate(n);
        c
    }
}

/// Keeps exactly `k` labeled sentences per language, chosen under `seed`.
/// The original relative order is preserved; other splits are unchanged.
pub fn subsample_labeled(corpus: &Corpus, k_per_lang: usize, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let langs: BTreeSet<&str> = corpus.labeled.iter().map(|s| s.language.as_str()).collect();
    let mut keep: Vec<usize> = Vec::new();
    for lang in langs {
        let mut idx: Vec<usize> =
            corpus.labeled.iter().enumerate().filter(|(_, s)| s.language == lang).map(|(i, _)| i).collect();
        if idx.len() < k_per_lang {
            bail!(Insufficient, "language {} has {} labeled sentences, {} requested", lang, idx.len(), k_per_lang);
        }
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..k_per_lang]);
    }
    keep.sort_unstable();
    let mut out = corpus.clone();
    out.labeled = keep.into_iter().map(|i| corpus.labeled[i].clone()).collect();
    Ok(out)
}

/// Encoded labeled sentences together with their original word-level tags,
/// which stay complete even when encoding truncates a sentence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedSet {
    pub examples: Vec<EncodedExample>,
    pub gold: Vec<Vec<Tag>>,
}

impl EncodedSet {
    pub fn encode(sentences: &[TaggedSentence], vocab: &WordPieceVocab, max_len: usize) -> Result<Self> {
        let examples = sentences.iter().map(|s| encode_sentence(s, vocab, max_len)).collect::<Result<Vec<_>>>()?;
        Ok(Self { examples, gold: sentences.iter().map(|s| s.tags.clone()).collect() })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn only_language(&self, language: &str) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.examples[i].language == language).collect();
        Self {
            examples: keep.iter().map(|&i| self.examples[i].clone()).collect(),
            gold: keep.iter().map(|&i| self.gold[i].clone()).collect(),
        }
    }

    pub fn languages(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.language.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

/// Encodes unlabeled sentences in order.
pub fn encode_unlabeled(sentences: &[UnlabeledSentence], vocab: &WordPieceVocab, max_len: usize) -> Result<Vec<EncodedExample>> {
    sentences.iter().map(|s| encode_words(&s.words, vocab, max_len, &s.language)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::is_valid_iob2;

    fn small() -> Corpus {
        generate_synthetic(&SynthConfig { num_langs: 3, labeled_per_lang: 20, unlabeled_total: 30, ..SynthConfig::default() }, 7)
    }

    #[test]
    fn sentence_constructor_repairs() {
        let s = TaggedSentence::new(alloc::vec!["a".into()], alloc::vec![Tag::IOrg], "xx").unwrap();
        assert_eq!(s.tags, alloc::vec![Tag::BOrg]);
        assert!(TaggedSentence::new(alloc::vec!["a".into()], alloc::vec![], "xx").is_err());
        assert!(TaggedSentence::new(alloc::vec!["a".into()], alloc::vec![Tag::Cls], "xx").is_err());
    }

    #[test]
    fn subsample_exact_counts() {
        let c = small();
        let s = subsample_labeled(&c, 5, 1).unwrap();
        assert_eq!(s.labeled.len(), 15);
        for lang in c.languages() {
            assert_eq!(s.labeled.iter().filter(|x| x.language == lang).count(), 5);
        }
        assert_eq!(s.unlabeled, c.unlabeled);
        assert!(s.labeled.iter().all(|x| is_valid_iob2(&x.tags)));
    }

    #[test]
    fn subsample_full_size_is_identity() {
        let c = small();
        assert_eq!(subsample_labeled(&c, 20, 3).unwrap(), c);
    }

    #[test]
    fn subsample_seeds_differ() {
        let c = small();
        let a = subsample_labeled(&c, 5, 1).unwrap();
        let b = subsample_labeled(&c, 5, 2).unwrap();
        assert_ne!(a.labeled, b.labeled);
        assert_eq!(a.labeled.len(), b.labeled.len());
    }

    #[test]
    fn subsample_names_short_language() {
        let c = small();
        let err = subsample_labeled(&c, 21, 1).unwrap_err();
        assert!(matches!(err, crate::Error::Insufficient(ref m) if m.contains("s00")), "{err}");
    }
}
