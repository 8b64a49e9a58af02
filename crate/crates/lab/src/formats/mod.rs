//! On-disk artifact formats.

mod binary;
pub mod checkpoint;
pub mod history;
pub mod report;
pub mod text;
pub mod trace;

use std::path::{Path, PathBuf};

use crate::error::LabResult;

pub use checkpoint::{read_checkpoint, read_students, read_teacher, write_checkpoint, Checkpoint, ConfigHash};
pub use history::{read_history, write_history};
pub use text::{parse_conll, parse_unlabeled, parse_word_vectors, read_vocab, write_vocab};
pub use trace::{read_trace, write_trace};

pub fn hex(hash: &ConfigHash) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar for formats whose layout leaves no room for a provenance header
/// (vocabularies and traces): `name.ext` → `name.ext.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_meta(path: &Path, hash: &ConfigHash) -> LabResult<()> {
    text::write_file(&meta_path(path), format!("config-hash: {}\n", hex(hash)).as_bytes())
}
