//! Stage-wise knowledge distillation from a transformer tagger into a BiLSTM student.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is pure
//! computation: a small reverse-mode autodiff kernel, WordPiece tokenization,
//! the teacher and student networks, the distillation objectives, truncated SVD
//! for embedding compression, the multi-stage training engine and span-level
//! evaluation. File formats, timing and the command line live in the `stagedistil`
//! crate.

#![no_std]

extern crate alloc;

pub mod data;
pub mod distil;
pub mod embed;
mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod nn;
pub mod teacher;
pub mod tokenizer;

pub use error::{Error, Result};
