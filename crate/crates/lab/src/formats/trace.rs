//! Binary teacher traces: magic `XDTR`, u32 version, C, D, layer, N, then per
//! record K, K piece ids, K×C logits and K×D representations, all
//! little-endian with f32 payloads.

use std::io::{Read, Write};
use std::path::Path;

use stagedistil_core::teacher::{TeacherTrace, TraceRecord};

use super::binary::{Reader, Writer};
use crate::error::{LabError, LabResult};

pub const TRACE_MAGIC: &[u8; 4] = b"XDTR";
pub const TRACE_VERSION: u32 = 1;

pub fn write_trace_to<W: Write>(out: W, trace: &TeacherTrace) -> std::io::Result<()> {
    let mut w = Writer::new(out);
    w.bytes(TRACE_MAGIC)?;
    w.u32(TRACE_VERSION)?;
    w.u32(trace.classes as u32)?;
    w.u32(trace.dim as u32)?;
    w.u32(trace.layer as u32)?;
    w.u32(trace.records.len() as u32)?;
    for r in &trace.records {
        w.u32(r.ids.len() as u32)?;
        for &id in &r.ids {
            w.u32(id)?;
        }
        for &v in r.logits.iter().chain(&r.reps) {
            w.f32(v)?;
        }
    }
    w.finish()
}

pub fn read_trace_from<R: Read>(input: R) -> Result<TeacherTrace, String> {
    let mut r = Reader::new(input);
    let magic = r.array::<4>()?;
    if &magic != TRACE_MAGIC {
        return Err("not a trace file (bad magic)".into());
    }
    let version = r.u32()?;
    if version != TRACE_VERSION {
        return Err(format!("unsupported trace version {version}"));
    }
    let classes = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let layer = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let k = r.u32()? as usize;
        let ids = (0..k).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let logits = (0..k * classes).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        let reps = (0..k * dim).map(|_| r.f32()).collect::<Result<Vec<_>, _>>().map_err(|e| format!("record {i}: {e}"))?;
        records.push(TraceRecord { ids, logits, reps });
    }
    if !r.at_end()? {
        return Err("trailing bytes after the last record".into());
    }
    Ok(TeacherTrace { classes, dim, layer, records })
}

pub fn write_trace(path: &Path, trace: &TeacherTrace) -> LabResult<()> {
    let mut buf = Vec::new();
    write_trace_to(&mut buf, trace).map_err(LabError::io(path))?;
    super::text::write_file(path, &buf)
}

pub fn read_trace(path: &Path) -> LabResult<TeacherTrace> {
    let file = std::fs::File::open(path).map_err(LabError::io(path))?;
    let trace = read_trace_from(std::io::BufReader::new(file)).map_err(|m| LabError::format(path, m))?;
    trace.validate().map_err(|e| LabError::format(path, e.to_string()))?;
    Ok(trace)
}
