//! Acceptance run: one PASS/FAIL line per criterion. Set `ACCEPTANCE_ONLY`
//! to a comma list (e.g. `1,2,7`) to run a subset; criteria 5, 6 and 9 reuse
//! the artifacts of criterion 4.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagedistil::bench::{measure_latency, BenchModel, LatencySettings};
use stagedistil::{ExperimentConfig, Pipeline};
use stagedistil_core::data::Batch;
use stagedistil_core::distil::{StrategyId, TrainHistory};
use stagedistil_core::embed::{frobenius_distance, reconstruct, svd, svd_reduce_with_basis};
use stagedistil_core::eval::{extract_spans, span_f1, Span};
use stagedistil_core::losses::{joint_loss_graph, LossSet, LossWeights, Pass};
use stagedistil_core::models::{Arch, HeadInput, StudentConfig, StudentModel, TeacherConfig, TeacherModel};
use stagedistil_core::nn::{grad_check, KldDirection, Tensor};
use stagedistil_core::teacher::TraceRecord;
use stagedistil_core::tokenizer::{EncodedExample, EntityType, Tag};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1

fn example(rng: &mut ChaCha8Rng, v: usize, len: usize, max_len: usize, classes: usize) -> EncodedExample {
    let mut ids: Vec<u32> = (0..len).map(|_| rng.gen_range(4..v as u32)).collect();
    ids.resize(max_len, 2);
    let mut tags: Vec<Tag> = (0..len).map(|_| Tag::from_id(rng.gen_range(0..classes)).unwrap()).collect();
    tags.resize(max_len, Tag::Pad);
    EncodedExample { ids, tags: Some(tags), word_starts: vec![true; max_len], len, word_count: len, language: "s00".into() }
}

fn student_error(rng: &mut ChaCha8Rng, arch: Option<Arch>, head: HeadInput, losses: LossSet, dir: KldDirection) -> f64 {
    let v = rng.gen_range(8..=20);
    let e = rng.gen_range(2..=8);
    let h = rng.gen_range(1..=6);
    let d = rng.gen_range(2..=8);
    let mut cfg = StudentConfig::bilstm(v, e, h, d);
    cfg.head_input = head;
    if let Some(a) = arch {
        cfg.arch = a;
        cfg.emb_dim = 4;
    }
    let mut model = StudentModel::new(cfg, rng).unwrap();
    let c = cfg.classes;
    let k = rng.gen_range(3..=6);
    let examples: Vec<EncodedExample> = (0..2).map(|i| example(rng, v, (k - i).max(1), 6, c)).collect();
    let records: Vec<TraceRecord> = (0..2)
        .map(|i| {
            let len = (k - i).max(1);
            TraceRecord {
                ids: (0..len).map(|_| rng.gen_range(4..v as u32)).collect(),
                logits: (0..len * c).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                reps: (0..len * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            }
        })
        .collect();
    let lab = Batch::from_examples(&examples.iter().collect::<Vec<_>>());
    let unl = Batch::from_trace(&records.iter().collect::<Vec<_>>(), c, d);
    let shape = model.clone();
    let w = LossWeights::new(1.0, 0.7, 1.3).unwrap();
    grad_check(&mut model.params, 1e-5, |g| {
        let lo = losses.ce.then(|| shape.forward(g, &lab, None));
        let uo = losses.needs_unlabeled().then(|| shape.forward(g, &unl, None));
        let lp = lo.as_ref().map(|out| Pass { out, batch: &lab });
        let up = uo.as_ref().map(|out| Pass { out, batch: &unl });
        Ok(joint_loss_graph(g, lp, up, w, losses, dir)?.0)
    })
    .unwrap()
    .max_rel_error
}

fn teacher_error(rng: &mut ChaCha8Rng) -> f64 {
    let v = rng.gen_range(8..=20);
    let cfg = TeacherConfig { vocab_size: v, width: 4, layers: 2, heads: 2, ff_width: 6, max_len: 6, classes: 11, dropout: 0.1, local_bias: true };
    let mut teacher = TeacherModel::new(cfg, rng).unwrap();
    let examples: Vec<EncodedExample> = (0..2).map(|i| example(rng, v, 3 + i * 2, 6, 11)).collect();
    let batch = Batch::from_examples(&examples.iter().collect::<Vec<_>>());
    let shape = teacher.clone();
    grad_check(&mut teacher.params, 1e-5, |g| {
        let out = shape.forward(g, &batch, Some(1), None)?;
        Ok(g.softmax_cross_entropy(out.logits, batch.targets.clone().unwrap(), &batch.mask))
    })
    .unwrap()
    .max_rel_error
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let all = LossSet { ce: true, ll: true, rl: true };
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for losses in [LossSet::CE, LossSet::LL, LossSet::RL, LossSet { ce: true, ll: true, rl: false }, all] {
        for _ in 0..4 {
            worst = worst.max(student_error(&mut rng, None, HeadInput::Projected, losses, KldDirection::TeacherToStudent));
            checks += 1;
        }
    }
    for _ in 0..3 {
        worst = worst.max(student_error(&mut rng, None, HeadInput::Projected, LossSet::RL, KldDirection::StudentToTeacher));
        worst = worst.max(student_error(&mut rng, None, HeadInput::Hidden, LossSet::CE, KldDirection::TeacherToStudent));
        worst = worst.max(student_error(&mut rng, Some(Arch::Transformer { depth: 1, ff_width: 6 }), HeadInput::Projected, all, KldDirection::TeacherToStudent));
        worst = worst.max(teacher_error(&mut rng));
        checks += 4;
    }
    outcome(worst < 1e-4, format!("{checks} checks, worst relative error {worst:.2e} (limit 1e-4, eps 1e-5)"))
}

// ---------------------------------------------------------------- 2

fn brute_spans(tags: &[Tag]) -> Vec<(EntityType, usize, usize)> {
    let mut out = Vec::new();
    let n = tags.len();
    for x in EntityType::ALL {
        let (b, i_tag) = (Tag::begin(x), Tag::inside(x));
        for i in 0..n {
            let opens = tags[i] == b || (tags[i] == i_tag && (i == 0 || (tags[i - 1] != b && tags[i - 1] != i_tag)));
            if !opens {
                continue;
            }
            for j in i..n {
                if (i + 1..=j).all(|k| tags[k] == i_tag) && (j + 1 == n || tags[j + 1] != i_tag) {
                    out.push((x, i, j));
                }
            }
        }
    }
    out
}

fn brute_f1(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> f64 {
    let (mut m, mut g, mut p) = (0usize, 0usize, 0usize);
    for (gt, pt) in gold.iter().zip(pred) {
        let (gs, ps) = (brute_spans(gt), brute_spans(pt));
        g += gs.len();
        p += ps.len();
        m += gs.iter().filter(|s| ps.contains(s)).count();
    }
    if m == 0 {
        return 0.0;
    }
    let (pr, rc) = (m as f64 / p as f64, m as f64 / g as f64);
    2.0 * pr * rc / (pr + rc)
}

/// Valid IOB2: an `I-X` only after `B-X` or `I-X`.
fn random_iob2(rng: &mut ChaCha8Rng, len: usize) -> Vec<Tag> {
    let mut out: Vec<Tag> = Vec::with_capacity(len);
    for _ in 0..len {
        let prev = out.last().and_then(|t| t.entity());
        let r = rng.gen_range(0..10);
        let t = match (r, prev) {
            (0..=3, _) => Tag::O,
            (4..=6, Some(x)) => Tag::inside(x),
            _ => Tag::begin(EntityType::ALL[rng.gen_range(0..3)]),
        };
        out.push(t);
    }
    out
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let spans = |v: &[Vec<Tag>]| v.iter().map(|t| extract_spans(t)).collect::<Vec<Vec<Span>>>();
    let (mut gold, mut pred) = (Vec::new(), Vec::new());
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(0..=10);
        let g = random_iob2(&mut rng, len);
        // half the predictions are perturbed copies so matches are common
        let p = if rng.gen_bool(0.5) {
            let mut p = g.clone();
            if len > 0 {
                let i = rng.gen_range(0..len);
                p[i] = random_iob2(&mut rng, 1)[0];
            }
            p
        } else {
            random_iob2(&mut rng, len)
        };
        let single = span_f1(&spans(&[g.clone()]), &spans(&[p.clone()])).unwrap().f1;
        if (single - brute_f1(&[g.clone()], &[p.clone()])).abs() > 1e-12 {
            mismatches += 1;
        }
        gold.push(g);
        pred.push(p);
    }
    let total = span_f1(&spans(&gold), &spans(&pred)).unwrap().f1;
    let oracle = brute_f1(&gold, &pred);
    let ok = mismatches == 0 && (total - oracle).abs() < 1e-12;
    outcome(ok, format!("1000 sequences, {mismatches} per-sequence mismatches, pooled F1 {total:.6} vs oracle {oracle:.6}"))
}

// ---------------------------------------------------------------- 3

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Tensor {
    Tensor::matrix(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Tensor {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut data = vec![0.0; d * k];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            data[i * k + j] = c[i];
        }
    }
    Tensor::matrix(d, k, data).unwrap()
}

fn projection_error(m: &Tensor, p: &Tensor) -> f64 {
    let (n, d, k) = (m.rows(), m.cols(), p.cols());
    let mut reduced = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            reduced[i * k + j] = (0..d).map(|l| m.data()[i * d + l] * p.data()[l * k + j]).sum();
        }
    }
    frobenius_distance(m, &reconstruct(&Tensor::matrix(n, k, reduced).unwrap(), p).unwrap()).unwrap()
}

fn low_rank(rng: &mut ChaCha8Rng, rank: usize) -> Tensor {
    let a = random_matrix(rng, 50, rank);
    let b = random_matrix(rng, rank, 16);
    let mut data = vec![0.0; 50 * 16];
    for i in 0..50 {
        for j in 0..16 {
            data[i * 16 + j] = (0..rank).map(|l| a.data()[i * rank + l] * b.data()[l * 16 + j]).sum();
        }
    }
    Tensor::matrix(50, 16, data).unwrap()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut beaten, mut worst_identity, mut worst_low_rank): (usize, f64, f64) = (0, 0.0, 0.0);
    for i in 0..20 {
        let m = random_matrix(&mut rng, 50, 16);
        let (reduced, basis) = svd_reduce_with_basis(&m, 8).unwrap();
        let err = frobenius_distance(&m, &reconstruct(&reduced, &basis).unwrap()).unwrap();
        let sigma = svd(&m).unwrap().sigma;
        let tail: f64 = sigma[8..].iter().map(|s| s * s).sum();
        worst_identity = worst_identity.max((err * err - tail).abs());
        for _ in 0..100 {
            if err > projection_error(&m, &random_orthonormal(&mut rng, 16, 8)) {
                beaten += 1;
            }
        }
        let lr = low_rank(&mut rng, 1 + i % 8);
        let (r2, b2) = svd_reduce_with_basis(&lr, 8).unwrap();
        worst_low_rank = worst_low_rank.max(frobenius_distance(&lr, &reconstruct(&r2, &b2).unwrap()).unwrap());
    }
    let ok = beaten == 0 && worst_identity <= 1e-8 && worst_low_rank <= 1e-8;
    outcome(
        ok,
        format!("20 matrices: {beaten}/2000 random projections did better; |err² − Σσ²_tail| ≤ {worst_identity:.1e}; rank ≤ 8 error ≤ {worst_low_rank:.1e}"),
    )
}

// ---------------------------------------------------------------- 4–9

struct Desk {
    root: tempfile::TempDir,
    config: ExperimentConfig,
    /// (strategy, seed, transfer) -> test mean F1
    f1: BTreeMap<(StrategyId, u64, usize), f64>,
    d42_histories: Vec<(String, TrainHistory)>,
    teacher_dev_f1: f64,
    prepare_secs: f64,
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn prepare() -> Desk {
    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let config = desk_config();
    let mut p = Pipeline::new(root.path(), config.clone());
    p.synth_data().unwrap();
    p.build_vocab().unwrap();
    let (_, dev) = p.train_teacher().unwrap();
    p.trace().unwrap();
    Desk { root, config, f1: BTreeMap::new(), d42_histories: Vec::new(), teacher_dev_f1: dev.mean_f1, prepare_secs: t.elapsed().as_secs_f64() }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn run(desk: &mut Desk, config: &ExperimentConfig, id: StrategyId, seed: u64, transfer: usize) -> f64 {
    let t = Instant::now();
    let mut p = Pipeline::new(desk.root.path(), config.clone()).quiet();
    let out = p.distil_run(id, seed, transfer).unwrap();
    eprintln!("  {} test F1 {:.4} ({:.0}s)", out.name, out.report.mean_f1, t.elapsed().as_secs_f64());
    if id == StrategyId::D42 {
        desk.d42_histories.push((out.name.clone(), out.history));
    }
    out.report.mean_f1
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn criterion_4(desk: &mut Desk) -> Outcome {
    let t = Instant::now();
    let ids = [StrategyId::D0, StrategyId::D0S, StrategyId::D1, StrategyId::D41, StrategyId::D42];
    let cfg = desk.config.clone();
    for seed in SEEDS {
        for id in ids {
            let f = run(desk, &cfg, id, seed, 0);
            desk.f1.insert((id, seed, 0), f);
        }
    }
    let secs = desk.prepare_secs + t.elapsed().as_secs_f64();
    let get = |id, s| desk.f1[&(id, s, 0)];
    let means: Vec<String> = ids.iter().map(|&id| format!("{id} {:.2}", 100.0 * mean(&SEEDS.map(|s| get(id, s))))).collect();
    // (a, b, strict): mean(a) > mean(b), or ≥ when not strict
    let pairs = [
        (StrategyId::D1, StrategyId::D0S, true),
        (StrategyId::D0S, StrategyId::D0, true),
        (StrategyId::D42, StrategyId::D41, false),
        (StrategyId::D42, StrategyId::D1, false),
    ];
    let mut ok = desk.teacher_dev_f1 >= 0.90 && secs <= 1800.0;
    let mut notes = Vec::new();
    for (a, b, strict) in pairs {
        let (ma, mb) = (mean(&SEEDS.map(|s| get(a, s))), mean(&SEEDS.map(|s| get(b, s))));
        let holds = |x: f64, y: f64| if strict { x > y } else { x >= y };
        let fails = SEEDS.iter().filter(|&&s| !holds(get(a, s), get(b, s))).count();
        let good = holds(ma, mb) && fails <= 1;
        ok &= good;
        notes.push(format!("{a}{}{b} {} ({fails} seed fails)", if strict { ">" } else { "≥" }, if good { "ok" } else { "violated" }));
    }
    outcome(
        ok,
        format!("teacher dev F1 {:.4}; means: {}; {}; {:.0}s of 1800s", desk.teacher_dev_f1, means.join(", "), notes.join(", "), secs),
    )
}

fn criterion_5(desk: &mut Desk) -> Outcome {
    let cfg = desk.config.clone();
    let seeds = [1, 2, 3];
    let mut means = Vec::new();
    for size in [2000, 10000, 20000] {
        let fs: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                // the full transfer set is the 20K run of criterion 4
                let key = (StrategyId::D42, s, if size == cfg.synthetic.unlabeled { 0 } else { size });
                if let Some(&f) = desk.f1.get(&key) {
                    f
                } else {
                    let f = run(desk, &cfg, StrategyId::D42, s, key.2);
                    desk.f1.insert(key, f);
                    f
                }
            })
            .collect();
        means.push(mean(&fs));
    }
    let ok = means.windows(2).all(|w| w[1] >= w[0] - 0.005);
    outcome(ok, format!("D42 mean F1 at 2K/10K/20K: {}", means.iter().map(|m| format!("{:.2}", 100.0 * m)).collect::<Vec<_>>().join(" / ")))
}

fn criterion_6(desk: &Desk) -> Outcome {
    let mut violations = Vec::new();
    let mut stages = 0;
    for (name, h) in &desk.d42_histories {
        let mut by_stage: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for l in &h.layers {
            by_stage.entry((l.language.clone(), l.stage)).or_default().push(l.best_val);
        }
        for ((_, stage), best) in by_stage {
            stages += 1;
            if best.windows(2).any(|w| w[1] > w[0]) {
                violations.push(format!("{name} stage {stage}"));
            }
        }
    }
    let ok = violations.is_empty() && !desk.d42_histories.is_empty();
    outcome(ok, format!("{} D42 runs, {stages} stages checked, violations: {}", desk.d42_histories.len(), if violations.is_empty() { "none".into() } else { violations.join(", ") }))
}

fn criterion_7(desk: Option<&Desk>) -> Outcome {
    let teacher = match desk {
        Some(d) => stagedistil::formats::read_teacher(&d.root.path().join("teacher.ckpt")).unwrap(),
        None => TeacherModel::new(TeacherConfig::desk(500, 32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap(),
    };
    let (v, dim) = (teacher.config.vocab_size, teacher.config.width);
    let student = |h: usize| StudentModel::new(StudentConfig::bilstm(v, 16, h, dim), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let settings = LatencySettings { batch_size: 32, queries: 320, seq_len: 32, runs: 100, warmup: 3, seed: 7 };
    let s32 = student(32);
    let ratio = teacher.param_count() as f64 / s32.param_count() as f64;
    let t_med = measure_latency(BenchModel::Teacher(&teacher), &settings).unwrap().median;
    let meds: Vec<f64> = [32, 64, 128].iter().map(|&h| measure_latency(BenchModel::Student(&student(h)), &settings).unwrap().median).collect();
    let ok = ratio >= 5.0 && meds[0] < t_med && meds[0] < meds[1] && meds[1] < meds[2];
    outcome(
        ok,
        format!(
            "params {} vs {} (ratio {ratio:.2}); median ms over 100 passes of {} queries in batches of 32: teacher {:.3}, H=32 {:.3}, H=64 {:.3}, H=128 {:.3}",
            teacher.param_count(),
            s32.param_count(),
            settings.queries,
            t_med * 1e3,
            meds[0] * 1e3,
            meds[1] * 1e3,
            meds[2] * 1e3
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.synthetic.languages = 3;
    cfg.synthetic.labeled_per_lang = 40;
    cfg.synthetic.unlabeled = 1500;
    cfg.teacher.epochs = 4;
    cfg.distil.epochs_per_layer = 2;
    let files = ["teacher.ckpt", "trace.xdtr", "runs/D42-s1.ckpt", "runs/D42-s1.history.tsv", "runs/D42-s1.layers.tsv"];
    let mut bytes: Vec<Vec<Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let root = tempfile::tempdir().unwrap();
        let mut p = Pipeline::new(root.path(), cfg.clone()).quiet();
        p.synth_data().unwrap();
        p.build_vocab().unwrap();
        p.train_teacher().unwrap();
        p.trace().unwrap();
        p.distil_run(StrategyId::D42, 1, 0).unwrap();
        bytes.push(files.iter().map(|f| std::fs::read(root.path().join(f)).unwrap()).collect());
    }
    let differing: Vec<&str> = files.iter().zip(bytes[0].iter().zip(&bytes[1])).filter(|(_, (a, b))| a != b).map(|(f, _)| *f).collect();
    let size: usize = bytes[0].iter().map(Vec::len).sum();
    outcome(differing.is_empty(), format!("{} files ({size} bytes) compared, differing: {}", files.len(), if differing.is_empty() { "none".into() } else { differing.join(", ") }))
}

fn criterion_9(desk: &mut Desk) -> Outcome {
    let mut cfg = desk.config.clone();
    cfg.data.labels_per_lang = 20;
    let seeds = [1, 2, 3];
    let d42: Vec<f64> = seeds.iter().map(|&s| run(desk, &cfg, StrategyId::D42, s, 0)).collect();
    let d0s: Vec<f64> = seeds.iter().map(|&s| run(desk, &cfg, StrategyId::D0S, s, 0)).collect();
    let gap = 100.0 * (mean(&d42) - mean(&d0s));
    outcome(gap >= 3.0, format!("20 labels/lang: D42 {:.2} vs D0S {:.2}, gap {gap:.2} points (need ≥ 3)", 100.0 * mean(&d42), 100.0 * mean(&d0s)))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; listing mode
    // expects no output.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let names = [
        "gradient checks",
        "span F1 oracle",
        "SVD optimality",
        "strategy ordering",
        "transfer-size trend",
        "restore-best monotone",
        "compression and latency",
        "determinism",
        "low-resource gain",
    ];
    let start = Instant::now();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n} [{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, names[n as usize - 1], o.detail);
        results.push((n, o));
    };
    for n in [1, 2, 3] {
        if wanted(n) {
            report(n, [criterion_1, criterion_2, criterion_3][n as usize - 1]());
        }
    }
    // latency first, while nothing else has warmed or fragmented the heap
    let needs_desk = [4, 5, 6, 9].iter().any(|&n| wanted(n));
    let mut desk = needs_desk.then(prepare);
    if let Some(d) = desk.as_mut() {
        eprintln!("desk setup: {:.0}s, teacher dev F1 {:.4}", d.prepare_secs, d.teacher_dev_f1);
    }
    if wanted(7) {
        report(7, criterion_7(desk.as_ref()));
    }
    if let Some(d) = desk.as_mut() {
        if wanted(4) || wanted(5) || wanted(6) {
            report(4, criterion_4(d));
        }
        if wanted(5) {
            report(5, criterion_5(d));
        }
        if wanted(9) {
            report(9, criterion_9(d));
        }
        if wanted(6) {
            report(6, criterion_6(d));
        }
    }
    if wanted(8) {
        report(8, criterion_8());
    }
    results.sort_by_key(|(n, _)| *n);
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s{}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
