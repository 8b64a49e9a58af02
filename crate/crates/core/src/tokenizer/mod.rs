//! WordPiece vocabulary and tokenization, the eleven-tag scheme and label
//! alignment between words and pieces.

mod encode;
mod tags;
mod vocab;

pub use encode::{align_predictions, encode_sentence, encode_words, EncodedExample};
pub use tags::{is_valid_iob2, repair_iob2, EntityType, Tag, NUM_TAGS};
pub use vocab::{
    basic_tokenize, build_vocab, count_words, normalize_word, tokenize, tokenize_to_strings, WordFreqs,
    WordPieceVocab, CLS, MAX_WORD_CHARS, PAD, RESERVED, SEP, UNK,
};
