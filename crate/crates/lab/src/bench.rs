//! Parameter counts and forward-pass latency. Timing covers the forward pass
//! over prebuilt batches; tokenization and IO are outside the clock.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagedistil_core::data::Batch;
use stagedistil_core::models::{StudentModel, TeacherModel};
use stagedistil_core::tokenizer::{EncodedExample, RESERVED};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy)]
pub enum BenchModel<'a> {
    Teacher(&'a TeacherModel),
    Student(&'a StudentModel),
}

impl BenchModel<'_> {
    pub fn param_count(&self) -> usize {
        match self {
            BenchModel::Teacher(t) => t.param_count(),
            BenchModel::Student(s) => s.param_count(),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            BenchModel::Teacher(t) => t.config.vocab_size,
            BenchModel::Student(s) => s.config.vocab_size,
        }
    }

    fn max_len(&self) -> Option<usize> {
        match self {
            BenchModel::Teacher(t) => Some(t.config.max_len),
            BenchModel::Student(_) => None,
        }
    }

    fn run(&self, batch: &Batch) -> LabResult<usize> {
        Ok(match self {
            BenchModel::Teacher(t) => t.predict(batch)?.len(),
            BenchModel::Student(s) => s.predict(batch).len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySettings {
    pub batch_size: usize,
    pub queries: usize,
    pub seq_len: usize,
    pub runs: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for LatencySettings {
    fn default() -> Self {
        Self { batch_size: 32, queries: 1000, seq_len: 32, runs: 100, warmup: 3, seed: 0 }
    }
}

/// Seconds per run over all queries.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub samples: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub p95: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let mean = sorted.iter().sum::<f64>() / n as f64;
        // nearest rank
        let p95 = if n == 0 { f64::NAN } else { sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1] };
        Self { samples, median, mean, p95 }
    }
}

static ACTIVE: AtomicBool = AtomicBool::new(false);

/// Held while a measurement runs; a second measurement in the same process
/// fails instead of sharing the CPU.
pub struct ExclusiveRun(());

impl ExclusiveRun {
    pub fn acquire() -> LabResult<Self> {
        if ACTIVE.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(LabError::Bench("another latency measurement is running in this process".into()));
        }
        Ok(Self(()))
    }
}

impl Drop for ExclusiveRun {
    fn drop(&mut self) {
        ACTIVE.store(false, Ordering::Release);
    }
}

/// Random full-length queries: `[CLS]`, `seq_len - 2` content pieces, `[SEP]`.
pub fn synthetic_queries(vocab_size: usize, seq_len: usize, count: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = RESERVED.len() as u32;
    let hi = (vocab_size as u32).max(lo + 1);
    (0..count)
        .map(|_| {
            let mut ids = Vec::with_capacity(seq_len);
            ids.push(0);
            ids.extend((0..seq_len.saturating_sub(2)).map(|_| rng.gen_range(lo..hi)));
            ids.push(1);
            let n = ids.len();
            EncodedExample { ids, tags: None, word_starts: vec![true; n], len: n, word_count: n - 2, language: String::new() }
        })
        .collect()
}

pub fn measure_latency(model: BenchModel, settings: &LatencySettings) -> LabResult<LatencyStats> {
    if settings.warmup == 0 || settings.runs == 0 || settings.batch_size == 0 || settings.queries == 0 {
        return Err(LabError::Bench("warmup, runs, batch size and queries must be positive".into()));
    }
    if settings.seq_len < 3 || model.max_len().is_some_and(|m| settings.seq_len > m) {
        return Err(LabError::Bench(format!("sequence length {} does not fit the model", settings.seq_len)));
    }
    let queries = synthetic_queries(model.vocab_size(), settings.seq_len, settings.queries, settings.seed);
    let batches: Vec<Batch> = queries.chunks(settings.batch_size).map(|c| Batch::from_examples(&c.iter().collect::<Vec<_>>())).collect();
    let _guard = ExclusiveRun::acquire()?;
    let mut sink = 0usize;
    let mut once = || -> LabResult<f64> {
        let t = Instant::now();
        for b in &batches {
            sink = sink.wrapping_add(model.run(b)?);
        }
        Ok(t.elapsed().as_secs_f64())
    };
    for _ in 0..settings.warmup {
        once()?;
    }
    let samples = (0..settings.runs).map(|_| once()).collect::<LabResult<Vec<_>>>()?;
    std::hint::black_box(sink);
    Ok(LatencyStats::from_samples(samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBench {
    pub name: String,
    pub params: usize,
    pub batch: LatencyStats,
    pub online: LatencyStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub models: Vec<ModelBench>,
    pub settings: LatencySettings,
}

pub fn bench_model(name: &str, model: BenchModel, settings: &LatencySettings) -> LabResult<ModelBench> {
    let batch = measure_latency(model, settings)?;
    let online = measure_latency(model, &LatencySettings { batch_size: 1, ..*settings })?;
    Ok(ModelBench { name: name.to_string(), params: model.param_count(), batch, online })
}

impl BenchReport {
    /// Ratios of the first entry (the reference) to entry `i`:
    /// (compression, batch speedup, online speedup).
    pub fn ratios(&self, i: usize) -> (f64, f64, f64) {
        let (r, m) = (&self.models[0], &self.models[i]);
        (r.params as f64 / m.params as f64, r.batch.median / m.batch.median, r.online.median / m.online.median)
    }

    pub fn table(&self) -> String {
        let mut rows = vec![["model", "params", "compression", "batch median ms", "batch mean ms", "batch p95 ms", "online median ms", "speedup", "online speedup"]
            .map(String::from)
            .to_vec()];
        let ms = |s: f64| format!("{:.3}", s * 1e3);
        for (i, m) in self.models.iter().enumerate() {
            let (c, s, o) = self.ratios(i);
            rows.push(vec![
                m.name.clone(),
                m.params.to_string(),
                format!("{c:.2}"),
                ms(m.batch.median),
                ms(m.batch.mean),
                ms(m.batch.p95),
                ms(m.online.median),
                format!("{s:.2}"),
                format!("{o:.2}"),
            ]);
        }
        crate::formats::report::table(&rows)
    }

    /// One `key=value` record per model.
    pub fn records(&self, header: &str) -> String {
        let mut out = String::from(header);
        let st = &self.settings;
        for (i, m) in self.models.iter().enumerate() {
            let (c, s, o) = self.ratios(i);
            let _ = writeln!(
                out,
                "model={} params={} compression={c} batch_size={} queries={} seq_len={} runs={} batch_median_s={} batch_mean_s={} batch_p95_s={} online_median_s={} speedup={s} online_speedup={o}",
                m.name, m.params, st.batch_size, st.queries, st.seq_len, st.runs, m.batch.median, m.batch.mean, m.batch.p95, m.online.median
            );
        }
        out
    }
}

/// Teacher first, then each student, all under the same settings.
pub fn compression_report(teacher: BenchModel, students: &[(String, BenchModel)], settings: &LatencySettings) -> LabResult<BenchReport> {
    let mut models = vec![bench_model("teacher", teacher, settings)?];
    for (name, s) in students {
        models.push(bench_model(name, *s, settings)?);
    }
    Ok(BenchReport { models, settings: *settings })
}
