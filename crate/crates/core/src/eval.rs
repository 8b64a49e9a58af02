//! Phrase-level precision, recall and F1 with per-language aggregation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tokenizer::{EntityType, Tag};

/// An entity phrase over word indices, `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub entity: EntityType,
    pub start: usize,
    pub end: usize,
}

/// Maximal `B-X (I-X)*` runs. A stray `I-X` opens a new span; tags outside
/// the seven word-level tags count as `O`.
pub fn extract_spans(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let ent = tag.entity();
        let continues = tag.is_inside() && open.is_some_and(|s| Some(s.entity) == ent);
        if continues {
            if let Some(s) = open.as_mut() {
                s.end = i;
            }
            continue;
        }
        spans.extend(open.take());
        if let Some(entity) = ent {
            open = Some(Span { entity, start: i, end: i });
        }
    }
    spans.extend(open);
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl Prf {
    pub fn from_counts(matches: usize, gold: usize, predicted: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matches, predicted);
        let recall = ratio(matches, gold);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1, matches, gold, predicted }
    }
}

/// Micro-averaged scores over sentences; a match needs identical type and
/// boundaries.
pub fn span_f1(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<Prf> {
    if gold.len() != pred.len() {
        bail!(Shape, "{} gold sentences but {} predicted", gold.len(), pred.len());
    }
    let (mut m, mut ng, mut np) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gs: BTreeSet<&Span> = g.iter().collect();
        let ps: BTreeSet<&Span> = p.iter().collect();
        m += gs.intersection(&ps).count();
        ng += gs.len();
        np += ps.len();
    }
    Ok(Prf::from_counts(m, ng, np))
}

/// Mean and population standard deviation.
pub fn aggregate_languages(f1s: &[f64]) -> Result<(f64, f64)> {
    if f1s.is_empty() {
        bail!(Insufficient, "no languages to aggregate");
    }
    let n = f1s.len() as f64;
    let mean = f1s.iter().sum::<f64>() / n;
    let var = f1s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((mean, libm::sqrt(var)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageScore {
    pub language: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold spans.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub languages: Vec<LanguageScore>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

impl EvalReport {
    pub fn language(&self, name: &str) -> Option<&LanguageScore> {
        self.languages.iter().find(|l| l.language == name)
    }
}

/// One evaluated sentence: language, gold word tags, predicted word tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub language: &'a str,
    pub gold: &'a [Tag],
    pub pred: &'a [Tag],
}

/// Micro scores per language, macro mean and σ across languages.
pub fn evaluate(items: &[Scored]) -> Result<EvalReport> {
    let mut by_lang: BTreeMap<&str, (Vec<Vec<Span>>, Vec<Vec<Span>>)> = BTreeMap::new();
    for it in items {
        if it.gold.len() != it.pred.len() {
            bail!(Shape, "gold has {} tags, prediction {}", it.gold.len(), it.pred.len());
        }
        let e = by_lang.entry(it.language).or_default();
        e.0.push(extract_spans(it.gold));
        e.1.push(extract_spans(it.pred));
    }
    let mut languages = Vec::new();
    for (lang, (g, p)) in by_lang {
        let s = span_f1(&g, &p)?;
        languages.push(LanguageScore { language: lang.into(), precision: s.precision, recall: s.recall, f1: s.f1, support: s.gold });
    }
    let f1s: Vec<f64> = languages.iter().map(|l| l.f1).collect();
    let (mean_f1, std_f1) = aggregate_languages(&f1s)?;
    Ok(EvalReport { languages, mean_f1, std_f1 })
}

/// Fraction of exactly matching labels.
pub fn sentence_accuracy(gold: &[usize], pred: &[usize]) -> Result<f64> {
    if gold.len() != pred.len() {
        bail!(Shape, "{} gold labels but {} predicted", gold.len(), pred.len());
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    Ok(gold.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / gold.len() as f64)
}
