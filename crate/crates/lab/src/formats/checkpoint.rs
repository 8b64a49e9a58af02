//! Versioned little-endian checkpoints. Layout: magic `XDCK`, u32 version,
//! 32-byte config hash, u8 kind, the model configuration, then per group a
//! name, frozen flag and tensors (rank, u64 dims, f64 payload).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagedistil_core::distil::StudentSet;
use stagedistil_core::models::{Arch, HeadInput, Pooling, StudentConfig, StudentModel, TeacherConfig, TeacherModel};
use stagedistil_core::nn::{ParamGroup, Tensor};

use super::binary::{Reader, Writer};
use crate::error::{LabError, LabResult};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_STUDENTS: u8 = 1;
const KIND_TEACHER: u8 = 2;

pub type ConfigHash = [u8; 32];

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Students(StudentSet),
    Teacher(TeacherModel),
}

type Io = std::io::Result<()>;

fn write_groups<W: Write>(w: &mut Writer<W>, groups: &[ParamGroup]) -> Io {
    w.u32(groups.len() as u32)?;
    for g in groups {
        w.str(&g.name)?;
        w.u8(g.frozen as u8)?;
        w.u32(g.tensors.len() as u32)?;
        for t in &g.tensors {
            w.u32(t.shape().len() as u32)?;
            for &d in t.shape() {
                w.u64(d as u64)?;
            }
            for &v in t.data() {
                w.f64(v)?;
            }
        }
    }
    Ok(())
}

fn read_groups<R: Read>(r: &mut Reader<R>) -> Result<Vec<ParamGroup>, String> {
    let n = r.u32()? as usize;
    let mut groups = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let name = r.str()?;
        let frozen = r.u8()? != 0;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            tensors.push(Tensor::new(shape, data).map_err(|e| e.to_string())?);
        }
        let mut g = ParamGroup::new(name, tensors);
        g.frozen = frozen;
        groups.push(g);
    }
    Ok(groups)
}

fn write_student_config<W: Write>(w: &mut Writer<W>, c: &StudentConfig) -> Io {
    w.u32(c.vocab_size as u32)?;
    w.u32(c.emb_dim as u32)?;
    match c.arch {
        Arch::BiLstm { hidden } => {
            w.u8(0)?;
            w.u32(hidden as u32)?;
            w.u32(0)?;
        }
        Arch::Transformer { depth, ff_width } => {
            w.u8(1)?;
            w.u32(depth as u32)?;
            w.u32(ff_width as u32)?;
        }
    }
    w.u32(c.classes as u32)?;
    w.u32(c.teacher_dim as u32)?;
    w.u8(matches!(c.head_input, HeadInput::Hidden) as u8)?;
    w.u8(matches!(c.pooling, Pooling::LastHidden) as u8)?;
    w.f64(c.dropout)
}

fn read_student_config<R: Read>(r: &mut Reader<R>) -> Result<StudentConfig, String> {
    let vocab_size = r.u32()? as usize;
    let emb_dim = r.u32()? as usize;
    let arch_tag = r.u8()?;
    let (a, b) = (r.u32()? as usize, r.u32()? as usize);
    let arch = match arch_tag {
        0 => Arch::BiLstm { hidden: a },
        1 => Arch::Transformer { depth: a, ff_width: b },
        t => return Err(format!("unknown student architecture tag {t}")),
    };
    let classes = r.u32()? as usize;
    let teacher_dim = r.u32()? as usize;
    let head_input = if r.u8()? == 1 { HeadInput::Hidden } else { HeadInput::Projected };
    let pooling = if r.u8()? == 1 { Pooling::LastHidden } else { Pooling::Tokens };
    let dropout = r.f64()?;
    Ok(StudentConfig { vocab_size, emb_dim, arch, classes, teacher_dim, head_input, pooling, dropout })
}

fn write_teacher_config<W: Write>(w: &mut Writer<W>, c: &TeacherConfig) -> Io {
    for v in [c.vocab_size, c.width, c.layers, c.heads, c.ff_width, c.max_len, c.classes] {
        w.u32(v as u32)?;
    }
    w.f64(c.dropout)?;
    w.u8(c.local_bias as u8)
}

fn read_teacher_config<R: Read>(r: &mut Reader<R>) -> Result<TeacherConfig, String> {
    let mut v = [0usize; 7];
    for x in v.iter_mut() {
        *x = r.u32()? as usize;
    }
    let dropout = r.f64()?;
    let local_bias = r.u8()? != 0;
    Ok(TeacherConfig {
        vocab_size: v[0],
        width: v[1],
        layers: v[2],
        heads: v[3],
        ff_width: v[4],
        max_len: v[5],
        classes: v[6],
        dropout,
        local_bias,
    })
}

/// Stored groups must have the names and shapes a fresh model would have.
fn check_layout(stored: &[ParamGroup], fresh: &[ParamGroup]) -> Result<(), String> {
    let layout = |gs: &[ParamGroup]| -> Vec<(String, Vec<Vec<usize>>)> {
        gs.iter().map(|g| (g.name.clone(), g.tensors.iter().map(|t| t.shape().to_vec()).collect())).collect()
    };
    if layout(stored) != layout(fresh) {
        return Err("parameter layout does not match the stored configuration".into());
    }
    Ok(())
}

fn student_from(config: StudentConfig, params: Vec<ParamGroup>) -> Result<StudentModel, String> {
    let fresh = StudentModel::new(config, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    check_layout(&params, &fresh.params)?;
    Ok(StudentModel { config, params })
}

pub fn write_checkpoint_to<W: Write>(out: W, ckpt: &Checkpoint, hash: &ConfigHash) -> Io {
    let mut w = Writer::new(out);
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION)?;
    w.bytes(hash)?;
    match ckpt {
        Checkpoint::Teacher(t) => {
            w.u8(KIND_TEACHER)?;
            write_teacher_config(&mut w, &t.config)?;
            write_groups(&mut w, &t.params)?;
        }
        Checkpoint::Students(set) => {
            w.u8(KIND_STUDENTS)?;
            w.u8(matches!(set, StudentSet::PerLanguage(_)) as u8)?;
            let models = set.models();
            w.u32(models.len() as u32)?;
            for (lang, m) in models {
                w.str(lang)?;
                write_student_config(&mut w, &m.config)?;
                write_groups(&mut w, &m.params)?;
            }
        }
    }
    w.finish()
}

pub fn read_checkpoint_from<R: Read>(input: R) -> Result<(Checkpoint, ConfigHash), String> {
    let mut r = Reader::new(input);
    if &r.array::<4>()? != CHECKPOINT_MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let hash = r.array::<32>()?;
    let ckpt = match r.u8()? {
        KIND_TEACHER => {
            let config = read_teacher_config(&mut r)?;
            let params = read_groups(&mut r)?;
            let fresh = TeacherModel::new(config, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
            check_layout(&params, &fresh.params)?;
            Checkpoint::Teacher(TeacherModel { config, params })
        }
        KIND_STUDENTS => {
            let per_language = r.u8()? == 1;
            let n = r.u32()? as usize;
            let mut models = BTreeMap::new();
            for _ in 0..n {
                let lang = r.str()?;
                let config = read_student_config(&mut r)?;
                let params = read_groups(&mut r)?;
                models.insert(lang, student_from(config, params)?);
            }
            if per_language {
                Checkpoint::Students(StudentSet::PerLanguage(models))
            } else {
                let Some(m) = models.remove("") else { return Err("shared checkpoint without a model".into()) };
                if !models.is_empty() {
                    return Err("shared checkpoint holds several models".into());
                }
                Checkpoint::Students(StudentSet::Shared(m))
            }
        }
        k => return Err(format!("unknown checkpoint kind {k}")),
    };
    if !r.at_end()? {
        return Err("trailing bytes after the last group".into());
    }
    Ok((ckpt, hash))
}

pub fn checkpoint_bytes(ckpt: &Checkpoint, hash: &ConfigHash) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint_to(&mut buf, ckpt, hash).expect("writing to memory");
    buf
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint, hash: &ConfigHash) -> LabResult<()> {
    super::text::write_file(path, &checkpoint_bytes(ckpt, hash))
}

pub fn read_checkpoint(path: &Path) -> LabResult<(Checkpoint, ConfigHash)> {
    let file = std::fs::File::open(path).map_err(LabError::io(path))?;
    read_checkpoint_from(std::io::BufReader::new(file)).map_err(|m| LabError::format(path, m))
}

pub fn read_teacher(path: &Path) -> LabResult<TeacherModel> {
    match read_checkpoint(path)?.0 {
        Checkpoint::Teacher(t) => Ok(t),
        Checkpoint::Students(_) => Err(LabError::format(path, "expected a teacher checkpoint")),
    }
}

pub fn read_students(path: &Path) -> LabResult<StudentSet> {
    match read_checkpoint(path)?.0 {
        Checkpoint::Students(s) => Ok(s),
        Checkpoint::Teacher(_) => Err(LabError::format(path, "expected a student checkpoint")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_round_trip() {
        let cfg = StudentConfig::bilstm(12, 4, 3, 6);
        let mut m = StudentModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        m.params[1].frozen = true;
        let ck = Checkpoint::Students(StudentSet::Shared(m));
        let bytes = checkpoint_bytes(&ck, &[7; 32]);
        let (back, hash) = read_checkpoint_from(&bytes[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(hash, [7; 32]);
    }

    #[test]
    fn teacher_round_trip() {
        let cfg = TeacherConfig { vocab_size: 10, width: 4, layers: 2, heads: 2, ff_width: 8, max_len: 6, classes: 11, dropout: 0.1, local_bias: true };
        let t = TeacherModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ck = Checkpoint::Teacher(t);
        let bytes = checkpoint_bytes(&ck, &[0; 32]);
        assert_eq!(read_checkpoint_from(&bytes[..]).unwrap().0, ck);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let cfg = StudentConfig::bilstm(12, 4, 3, 6);
        let mut m = StudentModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        m.params[0].tensors[0] = Tensor::zeros(&[11, 4]);
        let bytes = checkpoint_bytes(&Checkpoint::Students(StudentSet::Shared(m)), &[0; 32]);
        assert!(read_checkpoint_from(&bytes[..]).is_err());
    }
}
