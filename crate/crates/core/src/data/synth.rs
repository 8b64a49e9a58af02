//! Desk-scale multilingual NER corpus.
//!
//! Every pseudo-language has its own lowercase function words, a few of
//! which act as type-specific context triggers placed before entities.
//! Entity surface forms come from lexicons shared by all languages, sampled
//! with a Zipf-like skew so that a small labeled set covers the frequent
//! names while the tail mostly shows up in the unlabeled transfer set.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, TaggedSentence, UnlabeledSentence};
use crate::tokenizer::{EntityType, Tag};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_langs: usize,
    pub labeled_per_lang: usize,
    pub unlabeled_total: usize,
    pub dev_per_lang: usize,
    pub test_per_lang: usize,
    /// Names per entity lexicon.
    pub lexicon_size: usize,
    /// Function words per language, triggers included.
    pub function_words: usize,
    /// Probability that an entity is preceded by a trigger of its type.
    pub trigger_rate: f64,
    /// Probability that a name carries one of its type's endings.
    pub ending_rate: f64,
    /// Fraction of location names that double as person names.
    pub ambiguity: f64,
    /// Probability that an unlabeled entity comes from the shared lexicons
    /// rather than from names never seen in the labeled splits.
    pub domain_overlap: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_langs: 5,
            labeled_per_lang: 100,
            unlabeled_total: 20_000,
            dev_per_lang: 50,
            test_per_lang: 200,
            lexicon_size: 160,
            function_words: 48,
            trigger_rate: 0.9,
            ending_rate: 0.8,
            ambiguity: 0.1,
            domain_overlap: 1.0,
        }
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";
const TRIGGERS_PER_TYPE: usize = 3;
const ZIPF_EXPONENT: f64 = 0.8;

fn syllable<R: Rng>(rng: &mut R, consonants: &[u8]) -> String {
    let c = consonants[rng.gen_range(0..consonants.len())] as char;
    let v = VOWELS[rng.gen_range(0..VOWELS.len())] as char;
    let mut s = String::new();
    s.push(c);
    s.push(v);
    if rng.gen_bool(0.3) {
        s.push(consonants[rng.gen_range(0..consonants.len())] as char);
    }
    s
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = (0..n)
            .map(|r| {
                acc += 1.0 / libm::pow((r + 1) as f64, ZIPF_EXPONENT);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty lexicon");
        let u = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

struct NameGen<'a> {
    used: &'a mut BTreeSet<String>,
}

impl NameGen<'_> {
    fn fresh<R: Rng>(&mut self, rng: &mut R, consonants: &[u8], syllables: (usize, usize), ending: Option<&str>, cap: bool) -> String {
        loop {
            let n = rng.gen_range(syllables.0..=syllables.1);
            let mut w: String = (0..n).map(|_| syllable(rng, consonants)).collect();
            if let Some(e) = ending {
                w.push_str(e);
            }
            let w = if cap { capitalize(&w) } else { w };
            if self.used.insert(w.to_lowercase()) {
                return w;
            }
        }
    }
}

struct Lexicon {
    names: Vec<String>,
    zipf: Zipf,
}

impl Lexicon {
    fn new(names: Vec<String>) -> Self {
        let zipf = Zipf::new(names.len());
        Self { names, zipf }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> &str {
        &self.names[self.zipf.sample(rng)]
    }
}

struct EntityLexicons {
    per_first: Lexicon,
    per_last: Lexicon,
    org_stem: Lexicon,
    org_suffix: Lexicon,
    loc_name: Lexicon,
    loc_prefix: Lexicon,
}

impl EntityLexicons {
    fn generate<R: Rng>(rng: &mut R, size: usize, ambiguity: f64, ending_rate: f64, used: &mut BTreeSet<String>) -> Self {
        let mut g = NameGen { used };
        let endings = |rng: &mut R, g: &mut NameGen<'_>| -> Vec<String> {
            (0..4).map(|_| g.fresh(rng, CONSONANTS, (1, 1), None, false)).collect()
        };
        let per_end = endings(rng, &mut g);
        let org_end = endings(rng, &mut g);
        let loc_end = endings(rng, &mut g);
        let typed = |rng: &mut R, g: &mut NameGen<'_>, n: usize, ends: &[String]| -> Vec<String> {
            (0..n)
                .map(|_| {
                    let e = if rng.gen_bool(ending_rate) { Some(ends[rng.gen_range(0..ends.len())].as_str()) } else { None };
                    g.fresh(rng, CONSONANTS, (1, 2), e, true)
                })
                .collect()
        };
        let per_first = typed(rng, &mut g, size, &per_end);
        let per_last = typed(rng, &mut g, size, &per_end);
        let org_stem = typed(rng, &mut g, size, &org_end);
        let org_suffix: Vec<String> = (0..8).map(|_| g.fresh(rng, CONSONANTS, (1, 2), None, true)).collect();
        let mut loc_name = typed(rng, &mut g, size, &loc_end);
        let loc_prefix: Vec<String> = (0..5).map(|_| g.fresh(rng, CONSONANTS, (1, 1), None, true)).collect();
        let shared = (size as f64 * ambiguity) as usize;
        for i in 0..shared.min(size) {
            // spread the shared names over the frequency ranks
            let j = (i * 7 + 3) % size;
            loc_name[j] = per_first[(i * 11 + 5) % size].clone();
        }
        Self {
            per_first: Lexicon::new(per_first),
            per_last: Lexicon::new(per_last),
            org_stem: Lexicon::new(org_stem),
            org_suffix: Lexicon::new(org_suffix),
            loc_name: Lexicon::new(loc_name),
            loc_prefix: Lexicon::new(loc_prefix),
        }
    }

    fn entity<R: Rng>(&self, rng: &mut R, kind: EntityType) -> Vec<String> {
        let mut out = Vec::new();
        match kind {
            EntityType::Per => {
                out.push(self.per_first.pick(rng).into());
                if rng.gen_bool(0.6) {
                    out.push(self.per_last.pick(rng).into());
                }
            }
            EntityType::Org => {
                out.push(self.org_stem.pick(rng).into());
                if rng.gen_bool(0.25) {
                    out.push(self.org_stem.pick(rng).into());
                }
                if rng.gen_bool(0.7) {
                    out.push(self.org_suffix.pick(rng).into());
                }
            }
            EntityType::Loc => {
                if rng.gen_bool(0.2) {
                    out.push(self.loc_prefix.pick(rng).into());
                }
                out.push(self.loc_name.pick(rng).into());
            }
        }
        out
    }
}

struct Language {
    code: String,
    fillers: Vec<String>,
    triggers: [Vec<String>; 3],
}

impl Language {
    fn generate<R: Rng>(rng: &mut R, code: String, n_words: usize, used: &mut BTreeSet<String>) -> Self {
        let mut pool: Vec<u8> = CONSONANTS.to_vec();
        // each language draws from its own consonant subset
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.gen_range(0..=i));
        }
        pool.truncate(9);
        let mut g = NameGen { used };
        let n_words = n_words.max(3 * TRIGGERS_PER_TYPE + 4);
        let mut words: Vec<String> = (0..n_words).map(|_| g.fresh(rng, &pool, (1, 2), None, false)).collect();
        let mut triggers: [Vec<String>; 3] = Default::default();
        for t in triggers.iter_mut() {
            *t = words.split_off(words.len() - TRIGGERS_PER_TYPE);
        }
        Self { code, fillers: words, triggers }
    }
}

fn type_index(kind: EntityType) -> usize {
    match kind {
        EntityType::Per => 0,
        EntityType::Org => 1,
        EntityType::Loc => 2,
    }
}

struct Generator {
    langs: Vec<Language>,
    lex: EntityLexicons,
    unseen: EntityLexicons,
    cfg: SynthConfig,
}

impl Generator {
    fn sentence<R: Rng>(&self, rng: &mut R, lang: &Language, from_unseen: bool) -> (Vec<String>, Vec<Tag>) {
        let target = rng.gen_range(4..=12usize);
        let entities = match rng.gen::<f64>() {
            u if u < 0.2 => 0,
            u if u < 0.7 => 1,
            _ => 2,
        };
        let mut segments: Vec<(Vec<String>, Vec<Tag>)> = Vec::new();
        for _ in 0..entities {
            let kind = EntityType::ALL[rng.gen_range(0..3)];
            let lex = if from_unseen && !rng.gen_bool(self.cfg.domain_overlap) { &self.unseen } else { &self.lex };
            let span = lex.entity(rng, kind);
            let mut words = Vec::new();
            let mut tags = Vec::new();
            if rng.gen_bool(self.cfg.trigger_rate) {
                let trig = &lang.triggers[type_index(kind)];
                words.push(trig[rng.gen_range(0..trig.len())].clone());
                tags.push(Tag::O);
            }
            for (i, w) in span.into_iter().enumerate() {
                words.push(w);
                tags.push(if i == 0 { Tag::begin(kind) } else { Tag::inside(kind) });
            }
            segments.push((words, tags));
        }
        let used: usize = segments.iter().map(|s| s.0.len()).sum();
        let fillers = target.saturating_sub(used).max(if segments.is_empty() { 4 } else { 1 });
        // insertion point of each segment among the fillers
        let mut slots: Vec<usize> = (0..segments.len()).map(|_| rng.gen_range(0..=fillers)).collect();
        slots.sort_unstable();
        let mut words = Vec::new();
        let mut tags = Vec::new();
        let mut seg = segments.into_iter().zip(slots).peekable();
        for f in 0..=fillers {
            while let Some(((w, t), _)) = seg.next_if(|(_, s)| *s == f) {
                words.extend(w);
                tags.extend(t);
            }
            if f < fillers {
                words.push(lang.fillers[rng.gen_range(0..lang.fillers.len())].clone());
                tags.push(Tag::O);
            }
        }
        (words, tags)
    }
}

/// Generates a corpus; identical `(config, seed)` pairs give identical corpora.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let lex = EntityLexicons::generate(&mut rng, cfg.lexicon_size.max(1), cfg.ambiguity, cfg.ending_rate, &mut used);
    let unseen = EntityLexicons::generate(&mut rng, cfg.lexicon_size.max(1), cfg.ambiguity, cfg.ending_rate, &mut used);
    let langs: Vec<Language> = (0..cfg.num_langs.max(1))
        .map(|i| Language::generate(&mut rng, format!("s{i:02}"), cfg.function_words, &mut used))
        .collect();
    let gen = Generator { langs, lex, unseen, cfg: cfg.clone() };

    let labeled_split = |count: usize, rng: &mut ChaCha8Rng| -> Vec<TaggedSentence> {
        let mut out = Vec::new();
        for lang in &gen.langs {
            for _ in 0..count {
                let (w, t) = gen.sentence(rng, lang, false);
                out.push(TaggedSentence::new(w, t, lang.code.clone()).expect("generator emits valid IOB2"));
            }
        }
        out
    };
    let labeled = labeled_split(cfg.labeled_per_lang, &mut rng);
    let dev = labeled_split(cfg.dev_per_lang, &mut rng);
    let test = labeled_split(cfg.test_per_lang, &mut rng);
    let unlabeled = (0..cfg.unlabeled_total)
        .map(|_| {
            let lang = &gen.langs[rng.gen_range(0..gen.langs.len())];
            let (words, _) = gen.sentence(&mut rng, lang, true);
            UnlabeledSentence { words, language: lang.code.clone() }
        })
        .collect();
    Corpus { labeled, unlabeled, dev, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::is_valid_iob2;

    fn cfg(langs: usize, labeled: usize, unlabeled: usize) -> SynthConfig {
        SynthConfig { num_langs: langs, labeled_per_lang: labeled, unlabeled_total: unlabeled, ..SynthConfig::default() }
    }

    #[test]
    fn deterministic_under_seed() {
        let c = cfg(2, 10, 10);
        assert_eq!(generate_synthetic(&c, 3), generate_synthetic(&c, 3));
        assert_ne!(generate_synthetic(&c, 3), generate_synthetic(&c, 4));
    }

    #[test]
    fn no_labels_still_has_transfer_set() {
        let c = generate_synthetic(&cfg(2, 0, 25), 1);
        assert!(c.labeled.is_empty());
        assert_eq!(c.unlabeled.len(), 25);
    }

    #[test]
    fn exact_counts_and_valid_iob2() {
        let c = generate_synthetic(&cfg(5, 100, 50), 11);
        assert_eq!(c.labeled.len(), 500);
        for s in c.labeled.iter().chain(&c.dev).chain(&c.test) {
            assert!(is_valid_iob2(&s.tags));
            assert!((4..=14).contains(&s.words.len()), "{}", s.words.len());
        }
        assert_eq!(c.languages().len(), 5);
    }

    #[test]
    fn function_words_are_disjoint_across_languages() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut used = BTreeSet::new();
        let a = Language::generate(&mut rng, "a".into(), 40, &mut used);
        let b = Language::generate(&mut rng, "b".into(), 40, &mut used);
        let wa: BTreeSet<_> = a.fillers.iter().chain(a.triggers.iter().flatten()).collect();
        assert!(b.fillers.iter().chain(b.triggers.iter().flatten()).all(|w| !wa.contains(w)));
    }

    #[test]
    fn entities_are_shared_across_languages() {
        let c = generate_synthetic(&cfg(2, 200, 0), 5);
        let names = |lang: &str| -> BTreeSet<String> {
            c.labeled
                .iter()
                .filter(|s| s.language == lang)
                .flat_map(|s| s.words.iter().zip(&s.tags).filter(|(_, t)| t.is_begin()).map(|(w, _)| w.clone()))
                .collect()
        };
        assert!(names("s00").intersection(&names("s01")).count() > 5);
    }
}
