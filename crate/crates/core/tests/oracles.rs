//! Scoring, SVD and loss functions checked against independent computations.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagedistil_core::embed::{frobenius_distance, reconstruct, svd, svd_reduce_with_basis};
use stagedistil_core::eval::{extract_spans, span_f1, Span};
use stagedistil_core::losses::{ce_loss, joint_loss, logit_loss, repr_loss, repr_loss_dir, JointParts, LossSet, LossWeights};
use stagedistil_core::nn::{KldDirection, Tensor};
use stagedistil_core::tokenizer::{EntityType, Tag};

const WORD_TAGS: [Tag; 7] = [Tag::O, Tag::BPer, Tag::IPer, Tag::BOrg, Tag::IOrg, Tag::BLoc, Tag::ILoc];

/// Every `(type, i, j)` triple that forms a maximal phrase, found by testing
/// all index pairs against the definition.
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
                let body = (i + 1..=j).all(|k| tags[k] == i_tag);
                let closed = j + 1 == n || tags[j + 1] != i_tag;
                if body && closed {
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

fn tags() -> impl Strategy<Value = Vec<Tag>> {
    prop::collection::vec(prop::sample::select(WORD_TAGS.to_vec()), 0..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn span_f1_equals_brute_force(pairs in prop::collection::vec((tags(), tags()), 1..6)) {
        let gold: Vec<Vec<Tag>> = pairs.iter().map(|(g, _)| g.clone()).collect();
        let pred: Vec<Vec<Tag>> = pairs.iter().map(|(g, p)| {
            let mut p = p.clone();
            p.resize(g.len(), Tag::O);
            p
        }).collect();
        let spans = |v: &[Vec<Tag>]| v.iter().map(|t| extract_spans(t)).collect::<Vec<Vec<Span>>>();
        let got = span_f1(&spans(&gold), &spans(&pred)).unwrap().f1;
        prop_assert!((got - brute_f1(&gold, &pred)).abs() < 1e-12);
    }

    #[test]
    fn spans_match_brute_enumeration(t in tags()) {
        let mut a: Vec<_> = extract_spans(&t).into_iter().map(|s| (s.entity, s.start, s.end)).collect();
        let mut b = brute_spans(&t);
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn identical_tags_score_one() {
    let g = vec![vec![Tag::BPer, Tag::IPer, Tag::O, Tag::BLoc]];
    let s: Vec<Vec<Span>> = g.iter().map(|t| extract_spans(t)).collect();
    assert_eq!(span_f1(&s, &s).unwrap().f1, 1.0);
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Tensor {
    Tensor::matrix(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Orthonormal `d×k` basis from Gram-Schmidt on random columns.
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

/// `‖M − M·P·Pᵀ‖_F` for an orthonormal `P`.
fn projection_error(m: &Tensor, p: &Tensor) -> f64 {
    let (n, d, k) = (m.rows(), m.cols(), p.cols());
    let mut reduced = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            reduced[i * k + j] = (0..d).map(|l| m.data()[i * d + l] * p.data()[l * k + j]).sum();
        }
    }
    let back = reconstruct(&Tensor::matrix(n, k, reduced).unwrap(), p).unwrap();
    frobenius_distance(m, &back).unwrap()
}

#[test]
fn truncated_svd_beats_random_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 50, 16);
        let (reduced, basis) = svd_reduce_with_basis(&m, 8).unwrap();
        let err = frobenius_distance(&m, &reconstruct(&reduced, &basis).unwrap()).unwrap();
        let sigma = svd(&m).unwrap().sigma;
        let tail: f64 = sigma[8..].iter().map(|s| s * s).sum();
        assert!((err * err - tail).abs() < 1e-8, "{} vs {tail}", err * err);
        for _ in 0..100 {
            let p = random_orthonormal(&mut rng, 16, 8);
            assert!(err <= projection_error(&m, &p) + 1e-12);
        }
    }
}

#[test]
fn low_rank_input_is_reconstructed_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for rank in [1, 4, 8] {
        // product of 50×r and r×16 factors has rank r ≤ 8
        let a = random_matrix(&mut rng, 50, rank);
        let b = random_matrix(&mut rng, rank, 16);
        let mut data = vec![0.0; 50 * 16];
        for i in 0..50 {
            for j in 0..16 {
                data[i * 16 + j] = (0..rank).map(|l| a.data()[i * rank + l] * b.data()[l * 16 + j]).sum();
            }
        }
        let m = Tensor::matrix(50, 16, data).unwrap();
        let (reduced, basis) = svd_reduce_with_basis(&m, 8).unwrap();
        assert!(frobenius_distance(&m, &reconstruct(&reduced, &basis).unwrap()).unwrap() <= 1e-8);
    }
}

#[test]
fn singular_values_reproduce_the_frobenius_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = random_matrix(&mut rng, 12, 7);
    let s = svd(&m).unwrap();
    let total: f64 = m.data().iter().map(|x| x * x).sum();
    assert!((s.sigma.iter().map(|x| x * x).sum::<f64>() - total).abs() < 1e-10);
    assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
}

fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Tensor {
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

proptest! {
    #[test]
    fn kld_is_nonnegative_and_zero_on_agreement(seed in 0u64..500, n in 1usize..5, d in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, t) = (rows(&mut rng, n, d, 3.0), rows(&mut rng, n, d, 3.0));
        let mask = vec![true; n];
        for dir in [KldDirection::TeacherToStudent, KldDirection::StudentToTeacher] {
            prop_assert!(repr_loss_dir(&s, &t, &mask, dir).unwrap() >= -1e-12);
            prop_assert!(repr_loss_dir(&t, &t, &mask, dir).unwrap().abs() < 1e-12);
        }
        // feature softmax ignores a constant shift
        let shifted = Tensor::matrix(n, d, s.data().iter().map(|x| x + 1.5).collect()).unwrap();
        prop_assert!((repr_loss(&shifted, &t, &mask).unwrap() - repr_loss(&s, &t, &mask).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn masked_rows_do_not_count(seed in 0u64..500, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, t) = (rows(&mut rng, n, 3, 2.0), rows(&mut rng, n, 3, 2.0));
        let mut mask = vec![true; n];
        mask[n - 1] = false;
        let mut r2 = r.clone();
        r2.data_mut()[(n - 1) * 3] += 100.0;
        prop_assert_eq!(logit_loss(&r, &t, &mask).unwrap(), logit_loss(&r2, &t, &mask).unwrap());
    }
}

#[test]
fn joint_objective_is_the_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 3;
    let mut p = rows(&mut rng, n, 4, 1.0);
    for r in 0..n {
        let row = &mut p.data_mut()[r * 4..(r + 1) * 4];
        row.iter_mut().for_each(|x| *x = x.abs() + 0.1);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    let mut y = Tensor::zeros(&[n, 4]);
    for r in 0..n {
        y.data_mut()[r * 4 + r] = 1.0;
    }
    let (sr, tr) = (rows(&mut rng, n, 5, 2.0), rows(&mut rng, n, 5, 2.0));
    let (sl, tl) = (rows(&mut rng, n, 4, 2.0), rows(&mut rng, n, 4, 2.0));
    let m = vec![true; n];
    let parts = JointParts { labeled: Some((&p, &y, &m)), reps: Some((&sr, &tr, &m)), logits: Some((&sl, &tl, &m)) };
    let w = LossWeights::new(0.5, 2.0, 3.0).unwrap();
    let all = LossSet { ce: true, ll: true, rl: true };
    let expect = 0.5 * ce_loss(&p, &y, &m).unwrap() + 2.0 * repr_loss(&sr, &tr, &m).unwrap() + 3.0 * logit_loss(&sl, &tl, &m).unwrap();
    assert!((joint_loss(&parts, w, all).unwrap() - expect).abs() < 1e-12);
    assert!(joint_loss(&JointParts::default(), w, all).is_err());
}
