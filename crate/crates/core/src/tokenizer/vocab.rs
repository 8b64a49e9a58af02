use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{bail, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const RESERVED: [&str; 4] = [CLS, SEP, PAD, UNK];

/// Words longer than this many characters map to `[UNK]`.
pub const MAX_WORD_CHARS: usize = 100;

pub type WordFreqs = BTreeMap<String, u64>;

/// Ordered WordPiece vocabulary; ids are dense and the four reserved tokens
/// take ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceVocab {
    pieces: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl WordPieceVocab {
    pub const CLS_ID: u32 = 0;
    pub const SEP_ID: u32 = 1;
    pub const PAD_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;

    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.len() < RESERVED.len() || pieces.iter().zip(RESERVED).any(|(p, r)| p != r) {
            bail!(Data, "vocabulary must start with {:?}", RESERVED);
        }
        let mut index = BTreeMap::new();
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                bail!(Data, "invalid piece {:?} at id {}", p, i);
            }
            if index.insert(p.clone(), i as u32).is_some() {
                bail!(Data, "duplicate piece {:?} at id {}", p, i);
            }
        }
        Ok(Self { pieces, index })
    }

    pub fn reserved_only() -> Self {
        Self::from_pieces(RESERVED.iter().map(|s| s.to_string()).collect()).expect("reserved tokens are valid")
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }
}

/// Removes accents (combining marks after canonical decomposition). Case is kept.
pub fn normalize_word(word: &str) -> String {
    word.nfd().filter(|c| !is_combining_mark(*c)).collect()
}

/// Splits raw text on whitespace and punctuation, normalizing every word.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let norm = normalize_word(chunk);
        let mut cur = String::new();
        for c in norm.chars() {
            if c.is_alphanumeric() {
                cur.push(c);
            } else {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
                out.push(c.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn count_words<'a>(words: impl IntoIterator<Item = &'a str>) -> WordFreqs {
    let mut freqs = WordFreqs::new();
    for w in words {
        *freqs.entry(w.to_string()).or_insert(0) += 1;
    }
    freqs
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.char_indices()
        .map(|(i, c)| if i == 0 { c.to_string() } else { alloc::format!("##{c}") })
        .collect()
}

fn merge_symbols(left: &str, right: &str) -> String {
    let mut s = String::from(left);
    s.push_str(right.strip_prefix("##").unwrap_or(right));
    s
}

/// Builds a vocabulary of at most `size` pieces by repeatedly merging the most
/// frequent adjacent symbol pair. Every corpus word is tokenizable without
/// `[UNK]` because each character appears as an initial and continuation piece.
pub fn build_vocab(corpus: &WordFreqs, size: usize) -> Result<WordPieceVocab> {
    let alphabet: BTreeSet<String> =
        corpus.keys().filter(|w| w.chars().count() <= MAX_WORD_CHARS).flat_map(|w| initial_symbols(w)).collect();
    let minimum = RESERVED.len() + alphabet.len();
    if size < minimum {
        bail!(Config, "vocabulary size {} too small; minimum feasible size is {}", size, minimum);
    }

    let mut pieces: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    let mut ids: BTreeMap<String, u32> = BTreeMap::new();
    for (i, p) in pieces.iter().enumerate() {
        ids.insert(p.clone(), i as u32);
    }
    for a in &alphabet {
        ids.insert(a.clone(), pieces.len() as u32);
        pieces.push(a.clone());
    }

    let mut words: Vec<(Vec<u32>, i64)> = corpus
        .iter()
        .filter(|(w, _)| w.chars().count() <= MAX_WORD_CHARS)
        .map(|(w, &f)| (initial_symbols(w).iter().map(|s| ids[s]).collect(), f as i64))
        .collect();

    let mut counts: BTreeMap<(u32, u32), i64> = BTreeMap::new();
    let mut holders: BTreeMap<(u32, u32), BTreeSet<usize>> = BTreeMap::new();
    for (wi, (syms, f)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            *counts.entry((p[0], p[1])).or_insert(0) += f;
            holders.entry((p[0], p[1])).or_default().insert(wi);
        }
    }

    while pieces.len() < size {
        let Some((&best, _)) =
            counts.iter().filter(|(_, &c)| c > 0).max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        else {
            break;
        };
        let merged = merge_symbols(&pieces[best.0 as usize], &pieces[best.1 as usize]);
        let new_id = match ids.get(&merged) {
            Some(&id) => id,
            None => {
                let id = pieces.len() as u32;
                ids.insert(merged.clone(), id);
                pieces.push(merged);
                id
            }
        };
        let affected = holders.remove(&best).unwrap_or_default();
        for wi in affected {
            let (syms, f) = &words[wi];
            let f = *f;
            if !syms.windows(2).any(|p| (p[0], p[1]) == best) {
                continue;
            }
            for p in syms.windows(2) {
                *counts.get_mut(&(p[0], p[1])).expect("counted") -= f;
            }
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == best {
                    next.push(new_id);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            for p in next.windows(2) {
                *counts.entry((p[0], p[1])).or_insert(0) += f;
                holders.entry((p[0], p[1])).or_default().insert(wi);
            }
            words[wi].0 = next;
        }
        counts.remove(&best);
    }
    WordPieceVocab::from_pieces(pieces)
}

/// Greedy longest-match WordPiece segmentation of one pre-split word.
pub fn tokenize(word: &str, vocab: &WordPieceVocab) -> Vec<u32> {
    let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain(core::iter::once(word.len())).collect();
    let n = bounds.len() - 1;
    if n == 0 || n > MAX_WORD_CHARS {
        return alloc::vec![WordPieceVocab::UNK_ID];
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + 2);
    while start < n {
        let mut found = None;
        let mut end = n;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str("##");
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                out.push(id);
                start = end;
            }
            None => return alloc::vec![WordPieceVocab::UNK_ID],
        }
    }
    out
}

/// Piece strings for `tokenize`.
pub fn tokenize_to_strings(word: &str, vocab: &WordPieceVocab) -> Vec<String> {
    tokenize(word, vocab).into_iter().map(|id| vocab.piece(id).unwrap_or(UNK).to_string()).collect()
}
