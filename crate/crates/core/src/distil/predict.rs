use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::history::Pathway;
use crate::data::{Batch, EncodedSet};
use crate::error::{bail, Result};
use crate::eval::{evaluate, EvalReport, Scored};
use crate::models::{StudentModel, TeacherModel};
use crate::tokenizer::{align_predictions, EncodedExample, Tag};

/// A trained student, or one per language for the monolingual baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum StudentSet {
    Shared(StudentModel),
    PerLanguage(BTreeMap<String, StudentModel>),
}

impl StudentSet {
    pub fn model_for(&self, language: &str) -> Result<&StudentModel> {
        match self {
            StudentSet::Shared(m) => Ok(m),
            StudentSet::PerLanguage(map) => match map.get(language) {
                Some(m) => Ok(m),
                None => bail!(Config, "no model trained for language {:?}", language),
            },
        }
    }

    pub fn models(&self) -> Vec<(&str, &StudentModel)> {
        match self {
            StudentSet::Shared(m) => alloc::vec![("", m)],
            StudentSet::PerLanguage(map) => map.iter().map(|(k, v)| (k.as_str(), v)).collect(),
        }
    }

    /// The shared model, or the first one of a per-language set.
    pub fn primary(&self) -> &StudentModel {
        match self {
            StudentSet::Shared(m) => m,
            StudentSet::PerLanguage(map) => map.values().next().expect("at least one language"),
        }
    }
}

/// Piece-level tags for each example, padded to the example's `max_len`.
pub fn predict_piece_tags(model: &StudentModel, examples: &[EncodedExample], pathway: Pathway) -> Result<Vec<Vec<Tag>>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(64) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = Batch::from_examples(&refs);
        let classes = match pathway {
            Pathway::Softmax => model.predict(&batch),
            Pathway::LogitHead => model.predict_from_logit_head(&batch)?,
            Pathway::None => bail!(Config, "no classification pathway"),
        };
        for (b, e) in chunk.iter().enumerate() {
            let mut tags = alloc::vec![Tag::Pad; e.max_len()];
            for (t, tag) in tags.iter_mut().enumerate().take(e.len) {
                *tag = Tag::from_id(classes[batch.row(t, b)]).unwrap_or(Tag::O);
            }
            out.push(tags);
        }
    }
    Ok(out)
}

/// Word-level predictions aligned through each word's first piece.
pub fn predict_word_tags(model: &StudentModel, set: &EncodedSet, pathway: Pathway) -> Result<Vec<Vec<Tag>>> {
    let pieces = predict_piece_tags(model, &set.examples, pathway)?;
    Ok(set.examples.iter().zip(&pieces).map(|(e, p)| align_predictions(e, p)).collect())
}

pub fn evaluate_model(model: &StudentModel, set: &EncodedSet, pathway: Pathway) -> Result<EvalReport> {
    let preds = predict_word_tags(model, set, pathway)?;
    report(set, &preds)
}

/// Test scores of a student set, each language scored by its own model.
pub fn evaluate_students(students: &StudentSet, set: &EncodedSet) -> Result<EvalReport> {
    let mut preds = alloc::vec![Vec::new(); set.len()];
    for lang in set.languages() {
        let model = students.model_for(&lang)?;
        let idx: Vec<usize> = (0..set.len()).filter(|&i| set.examples[i].language == lang).collect();
        let examples: Vec<EncodedExample> = idx.iter().map(|&i| set.examples[i].clone()).collect();
        let pieces = predict_piece_tags(model, &examples, Pathway::Softmax)?;
        for (k, &i) in idx.iter().enumerate() {
            preds[i] = align_predictions(&examples[k], &pieces[k]);
        }
    }
    report(set, &preds)
}

/// Word-level test scores of the teacher.
pub fn evaluate_teacher(teacher: &TeacherModel, set: &EncodedSet) -> Result<EvalReport> {
    let mut preds = Vec::with_capacity(set.len());
    for chunk in set.examples.chunks(64) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = Batch::from_examples(&refs);
        let classes = teacher.predict(&batch)?;
        for (b, e) in chunk.iter().enumerate() {
            let pieces: Vec<Tag> = (0..e.max_len())
                .map(|t| if t < e.len { Tag::from_id(classes[batch.row(t, b)]).unwrap_or(Tag::O) } else { Tag::Pad })
                .collect();
            preds.push(align_predictions(e, &pieces));
        }
    }
    report(set, &preds)
}

fn report(set: &EncodedSet, preds: &[Vec<Tag>]) -> Result<EvalReport> {
    let items: Vec<Scored> = set
        .examples
        .iter()
        .zip(&set.gold)
        .zip(preds)
        .map(|((e, g), p)| Scored { language: &e.language, gold: g, pred: p })
        .collect();
    evaluate(&items)
}
