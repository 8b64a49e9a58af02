//! Finite-difference checks of every loss and both student trunks, plus the
//! teacher, on small random configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagedistil_core::data::Batch;
use stagedistil_core::losses::{joint_loss_graph, LossSet, LossWeights, Pass};
use stagedistil_core::models::{Arch, HeadInput, StudentConfig, StudentModel, TeacherConfig, TeacherModel};
use stagedistil_core::nn::{grad_check, KldDirection};
use stagedistil_core::teacher::TraceRecord;
use stagedistil_core::tokenizer::{EncodedExample, Tag};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn example(rng: &mut ChaCha8Rng, v: usize, len: usize, max_len: usize, classes: usize) -> EncodedExample {
    let mut ids: Vec<u32> = (0..len).map(|_| rng.gen_range(4..v as u32)).collect();
    ids.resize(max_len, 2);
    let mut tags: Vec<Tag> = (0..len).map(|_| Tag::from_id(rng.gen_range(0..classes)).unwrap()).collect();
    tags.resize(max_len, Tag::Pad);
    EncodedExample { ids, tags: Some(tags), word_starts: vec![true; max_len], len, word_count: len, language: "s00".into() }
}

fn trace(rng: &mut ChaCha8Rng, v: usize, len: usize, c: usize, d: usize) -> TraceRecord {
    TraceRecord {
        ids: (0..len).map(|_| rng.gen_range(4..v as u32)).collect(),
        logits: (0..len * c).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        reps: (0..len * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    }
}

fn small_config(rng: &mut ChaCha8Rng, arch: Option<Arch>) -> StudentConfig {
    let v = rng.gen_range(8..=20);
    let e = rng.gen_range(2..=8);
    let h = rng.gen_range(1..=6);
    let d = rng.gen_range(2..=8);
    let mut cfg = StudentConfig::bilstm(v, e, h, d);
    if let Some(a) = arch {
        cfg.arch = a;
    }
    cfg
}

fn check_student(cfg: StudentConfig, losses: LossSet, weights: LossWeights, dir: KldDirection, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = StudentModel::new(cfg, &mut rng).unwrap();
    let c = cfg.classes;
    let examples: Vec<EncodedExample> = (0..2).map(|i| example(&mut rng, cfg.vocab_size, 3 + i * 2, 6, c)).collect();
    let records: Vec<TraceRecord> = (0..2).map(|i| trace(&mut rng, cfg.vocab_size, 2 + i * 3, c, cfg.teacher_dim)).collect();
    let lab = Batch::from_examples(&examples.iter().collect::<Vec<_>>());
    let unl = Batch::from_trace(&records.iter().collect::<Vec<_>>(), c, cfg.teacher_dim);
    let shape = model.clone();
    let report = grad_check(&mut model.params, EPS, |g| {
        let lo = losses.ce.then(|| shape.forward(g, &lab, None));
        let uo = losses.needs_unlabeled().then(|| shape.forward(g, &unl, None));
        let lp = lo.as_ref().map(|out| Pass { out, batch: &lab });
        let up = uo.as_ref().map(|out| Pass { out, batch: &unl });
        Ok(joint_loss_graph(g, lp, up, weights, losses, dir)?.0)
    })
    .unwrap();
    assert!(report.entries > 0);
    report.max_rel_error
}

#[test]
fn every_loss_through_the_bilstm_student() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = [
        LossSet::CE,
        LossSet::LL,
        LossSet::RL,
        LossSet { ce: true, ll: true, rl: false },
        LossSet { ce: true, ll: true, rl: true },
    ];
    for (i, losses) in cases.into_iter().enumerate() {
        for trial in 0..2 {
            let cfg = small_config(&mut rng, None);
            let w = LossWeights::new(1.0, 0.5, 2.0).unwrap();
            let err = check_student(cfg, losses, w, KldDirection::TeacherToStudent, (i * 10 + trial) as u64);
            assert!(err < TOL, "{losses:?} on {cfg:?}: {err}");
        }
    }
}

#[test]
fn reverse_kld_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = small_config(&mut rng, None);
    let err = check_student(cfg, LossSet::RL, LossWeights::default(), KldDirection::StudentToTeacher, 5);
    assert!(err < TOL, "{err}");
}

#[test]
fn hidden_head_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cfg = small_config(&mut rng, None);
    cfg.head_input = HeadInput::Hidden;
    let err = check_student(cfg, LossSet::CE, LossWeights::default(), KldDirection::default(), 6);
    assert!(err < TOL, "{err}");
}

#[test]
fn transformer_student_trunk() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for depth in [0, 1, 2] {
        let mut cfg = small_config(&mut rng, Some(Arch::Transformer { depth, ff_width: 6 }));
        cfg.emb_dim = 4;
        let losses = LossSet { ce: true, ll: true, rl: true };
        let err = check_student(cfg, losses, LossWeights::default(), KldDirection::default(), 7 + depth as u64);
        assert!(err < TOL, "depth {depth}: {err}");
    }
}

#[test]
fn sentence_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for arch in [None, Some(Arch::Transformer { depth: 1, ff_width: 4 })] {
        let mut cfg = small_config(&mut rng, arch);
        cfg.emb_dim = 4;
        cfg.pooling = stagedistil_core::models::Pooling::LastHidden;
        let mut model = StudentModel::new(cfg, &mut rng).unwrap();
        let examples: Vec<EncodedExample> = (0..3).map(|i| example(&mut rng, cfg.vocab_size, 2 + i, 5, 4)).collect();
        let mut batch = Batch::from_examples(&examples.iter().collect::<Vec<_>>());
        batch.targets = Some(vec![0, 3, 1]);
        let shape = model.clone();
        let report = grad_check(&mut model.params, EPS, |g| {
            let out = shape.forward(g, &batch, None);
            Ok(joint_loss_graph(g, Some(Pass { out: &out, batch: &batch }), None, LossWeights::default(), LossSet::CE, KldDirection::default())?.0)
        })
        .unwrap();
        assert!(report.max_rel_error < TOL, "{arch:?}: {}", report.max_rel_error);
    }
}

#[test]
fn teacher_classifier_and_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = TeacherConfig { vocab_size: 12, width: 4, layers: 2, heads: 2, ff_width: 6, max_len: 6, classes: 11, dropout: 0.1, local_bias: true };
    let mut teacher = TeacherModel::new(cfg, &mut rng).unwrap();
    let examples: Vec<EncodedExample> = (0..2).map(|i| example(&mut rng, 12, 3 + i * 2, 6, 11)).collect();
    let batch = Batch::from_examples(&examples.iter().collect::<Vec<_>>());
    let shape = teacher.clone();
    let report = grad_check(&mut teacher.params, EPS, |g| {
        let out = shape.forward(g, &batch, Some(1), None)?;
        let ce = g.softmax_cross_entropy(out.logits, batch.targets.clone().unwrap(), &batch.mask);
        let reps = out.reps.unwrap();
        let target = vec![0.3; batch.rows() * 4];
        let rl = g.softmax_kld(reps, &target, &batch.mask, KldDirection::default());
        Ok(g.weighted_sum(vec![(ce, 1.0), (rl, 0.5)]))
    })
    .unwrap();
    assert!(report.max_rel_error < TOL, "{}: {:?}", report.max_rel_error, report.worst);
}
