//! Synthetic labeled notes with gold span annotations.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::catalog::{AnswerKind, CatalogDocument, QuestionCatalog, Tier};
use crate::digest::{json_digest, rng_at};
use crate::error::{Error, Result};
use crate::text::{scrub_pii, tokenize, NameLexicon, Token, TOKENIZER_VERSION};

/// Half-open token range `[start, end)` over a note's tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidSpan { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl From<(usize, usize)> for TokenSpan {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<TokenSpan> for (usize, usize) {
    fn from(span: TokenSpan) -> Self {
        (span.start, span.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub question_id: String,
    pub answered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<TokenSpan>,
    /// 1 affirmative, 0 negative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_answer: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_value: Option<f64>,
}

impl Annotation {
    pub fn unanswered(question_id: impl Into<String>) -> Self {
        Self { question_id: question_id.into(), answered: false, span: None, binary_answer: None, numeric_value: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledNote {
    pub id: String,
    pub age: f64,
    pub sex: Sex,
    pub text: String,
    pub icd_code: String,
    /// One per catalog question, in catalog order.
    pub annotations: Vec<Annotation>,
}

/// What an extractor is allowed to see of a note.
#[derive(Debug, Clone, Copy)]
pub struct NoteRef<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl LabeledNote {
    pub fn as_ref(&self) -> NoteRef<'_> {
        NoteRef { id: &self.id, text: &self.text }
    }

    pub fn validate(&self, catalog: &QuestionCatalog) -> Result<()> {
        if self.annotations.len() != catalog.len() {
            return Err(Error::DimensionMismatch { expected: catalog.len(), found: self.annotations.len() });
        }
        let n_tokens = tokenize(&self.text).len();
        for (a, q) in self.annotations.iter().zip(catalog.questions()) {
            if a.question_id != q.id {
                return Err(Error::UnknownQuestion(a.question_id.clone()));
            }
            let bad = |reason: &str| Error::Format {
                path: format!("note {}", self.id),
                reason: format!("question `{}`: {reason}", q.id),
            };
            if a.answered != a.span.is_some() {
                return Err(bad("answered flag disagrees with span"));
            }
            if let Some(span) = a.span {
                if span.is_empty() || span.end > n_tokens {
                    return Err(bad("span outside the note"));
                }
            }
            let binary = a.answered && q.answer_kind == AnswerKind::Binary;
            let numeric = a.answered && q.answer_kind == AnswerKind::Numeric;
            if a.binary_answer.is_some() != binary || a.binary_answer.is_some_and(|b| b > 1) {
                return Err(bad("binary answer inconsistent with answer kind"));
            }
            if a.numeric_value.is_some() != numeric || a.numeric_value.is_some_and(|v| !v.is_finite()) {
                return Err(bad("numeric value inconsistent with answer kind"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub catalog_digest: String,
    pub tokenizer_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub notes: Vec<LabeledNote>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Same provenance, different notes.
    pub fn with_notes(&self, notes: Vec<LabeledNote>) -> Self {
        Self { notes, ..self.clone() }
    }

    pub fn check_catalog(&self, catalog: &QuestionCatalog) -> Result<()> {
        let expected = catalog.digest();
        if self.catalog_digest != expected {
            return Err(Error::CatalogMismatch { expected, found: self.catalog_digest.clone() });
        }
        if self.tokenizer_version != TOKENIZER_VERSION {
            return Err(Error::TokenizerMismatch {
                expected: TOKENIZER_VERSION.into(),
                found: self.tokenizer_version.clone(),
            });
        }
        Ok(())
    }

    pub fn validate(&self, catalog: &QuestionCatalog) -> Result<()> {
        self.check_catalog(catalog)?;
        let mut ids = HashSet::new();
        for note in &self.notes {
            if !ids.insert(note.id.as_str()) {
                return Err(Error::Format {
                    path: "corpus".into(),
                    reason: format!("duplicate note id `{}`", note.id),
                });
            }
            note.validate(catalog)?;
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemographicsConfig {
    pub age_min: f64,
    pub age_max: f64,
    pub female_ratio: f64,
}

impl Default for DemographicsConfig {
    /// Children cohort: ages 0.17 to 17.99, 64% female.
    fn default() -> Self {
        Self { age_min: 0.17, age_max: 17.99, female_ratio: 0.64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub n_notes: usize,
    pub demographics: DemographicsConfig,
    /// Disease prior in profile order; uniform when absent.
    pub disease_prior: Option<Vec<f64>>,
    /// Prefix for note ids, so pool and gold corpora never collide.
    pub id_prefix: String,
    /// Probability that a note opens with a companion name and phone number,
    /// which are scrubbed before the note is stored.
    pub contact_line_rate: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n_notes: 303,
            demographics: DemographicsConfig::default(),
            disease_prior: None,
            id_prefix: "note".into(),
            contact_line_rate: 0.3,
        }
    }
}

const COMPANION_NAMES: &[&str] = &["Anna", "Gudrun", "Sigrid", "Helga", "Jon", "Einar", "Olafur", "Kristin"];

/// The lexicon matching the companion names the generator inserts.
pub fn generator_name_lexicon() -> NameLexicon {
    NameLexicon::new(COMPANION_NAMES)
}

/// Largest-remainder allocation of `n` items to shares `weights`.
pub(crate) fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort: ties go to the earlier share.
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa)
    });
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

fn format_value(value: f64, decimals: usize) -> String {
    format!("{value:.decimals$}")
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Picks the first phrase most of the time and the rest with decreasing
/// frequency, so some surface forms are rare.
fn pick_phrase<'a>(phrases: &'a [String], rng: &mut ChaCha8Rng) -> &'a str {
    let mut i = 0;
    while i + 1 < phrases.len() && rng.random_bool(0.3) {
        i += 1;
    }
    &phrases[i]
}

struct Sentence {
    question: usize,
    text: String,
    /// Byte range of the answer slot within `text`.
    slot: (usize, usize),
}

/// Generates `config.n_notes` labeled notes.
///
/// Diseases are assigned by largest-remainder quota of the prior and then
/// shuffled, so class counts are exact; everything else is sampled per note.
pub fn generate_corpus(doc: &CatalogDocument, config: &GenerateConfig, seed: u64) -> Result<LabeledCorpus> {
    doc.validate()?;
    if config.n_notes == 0 {
        return Err(Error::InvalidConfig("n_notes must be at least 1".into()));
    }
    let demo = &config.demographics;
    if !(0.0..=1.0).contains(&demo.female_ratio) || !(0.0 <= demo.age_min && demo.age_min <= demo.age_max) {
        return Err(Error::InvalidConfig("demographics out of range".into()));
    }
    if !(0.0..=1.0).contains(&config.contact_line_rate) {
        return Err(Error::InvalidConfig("contact_line_rate outside [0, 1]".into()));
    }
    let n_diseases = doc.profiles.len();
    let prior = match &config.disease_prior {
        Some(p) if p.len() == n_diseases && p.iter().all(|w| *w >= 0.0) && p.iter().sum::<f64>() > 0.0 => p.clone(),
        Some(_) => {
            return Err(Error::InvalidConfig("disease prior must match the profiles and be non-negative".into()))
        }
        None => vec![1.0; n_diseases],
    };

    let mut rng = rng_at(seed, &["corpus"]);
    let mut diseases: Vec<usize> = largest_remainder(config.n_notes, &prior)
        .into_iter()
        .enumerate()
        .flat_map(|(d, count)| std::iter::repeat_n(d, count))
        .collect();
    diseases.shuffle(&mut rng);

    let lexicon = generator_name_lexicon();
    let width = config.n_notes.to_string().len().max(4);
    let mut notes = Vec::with_capacity(config.n_notes);
    for (i, &disease) in diseases.iter().enumerate() {
        let id = format!("{}-{:0width$}", config.id_prefix, i);
        notes.push(generate_note(doc, disease, id, config, &lexicon, &mut rng)?);
    }
    Ok(LabeledCorpus {
        catalog_digest: doc.catalog.digest(),
        tokenizer_version: TOKENIZER_VERSION.into(),
        seed,
        config_digest: json_digest(&(config, json_digest(doc))),
        notes,
    })
}

fn generate_note(
    doc: &CatalogDocument,
    disease: usize,
    id: String,
    config: &GenerateConfig,
    lexicon: &NameLexicon,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledNote> {
    let demo = &config.demographics;
    let profile = &doc.profiles[disease];
    let age = (rng.random_range(demo.age_min..=demo.age_max) * 100.0).round() / 100.0;
    let sex = if rng.random_bool(demo.female_ratio) { Sex::Female } else { Sex::Male };

    let mut annotations: Vec<Annotation> =
        doc.catalog.questions().iter().map(|q| Annotation::unanswered(&q.id)).collect();
    let mut sections: [Vec<Sentence>; 3] = Default::default();
    for (qi, question) in doc.catalog.questions().iter().enumerate() {
        let params = &profile.params[qi];
        if !rng.random_bool(params.p_mention) {
            continue;
        }
        let templates = &doc.templates[qi];
        let ann = &mut annotations[qi];
        ann.answered = true;
        let (frame, phrase) = match question.answer_kind {
            AnswerKind::Binary => {
                let affirm = rng.random_bool(params.p_affirm.expect("validated"));
                ann.binary_answer = Some(affirm as u8);
                if affirm {
                    (doc.frames.affirmative.choose(rng), pick_phrase(&templates.affirmative, rng).to_string())
                } else {
                    (doc.frames.negated.choose(rng), pick_phrase(&templates.negated, rng).to_string())
                }
            }
            AnswerKind::Numeric => {
                let (mean, std) = (params.mean.expect("validated"), params.std.expect("validated"));
                let mut value = Normal::new(mean, std).expect("validated std").sample(rng);
                if let Some((lo, hi)) = templates.range {
                    value = value.clamp(lo, hi);
                }
                let rendered = format_value(value, templates.decimals);
                ann.numeric_value = Some(rendered.parse().expect("formatted float parses"));
                let phrase = pick_phrase(&templates.numeric, rng).replace("{value}", &rendered);
                (doc.frames.numeric.choose(rng), phrase)
            }
        };
        let frame = frame.expect("validated non-empty frames");
        let at = frame.find("{slot}").expect("validated frame");
        let phrase = if at == 0 { capitalize(&phrase) } else { phrase };
        let text = frame.replacen("{slot}", &phrase, 1);
        sections[question.tier.index()].push(Sentence { question: qi, text, slot: (at, at + phrase.len()) });
    }

    let mut text = String::new();
    let child = match sex {
        Sex::Female => "girl",
        Sex::Male => "boy",
    };
    text.push_str(&format!("{}-year-old {child}.", age.floor() as u32));
    if rng.random_bool(config.contact_line_rate) {
        let name = COMPANION_NAMES.choose(rng).expect("non-empty");
        let phone: u32 = rng.random_range(4_000_000..9_000_000);
        text.push_str(&scrub_pii(&format!(" Accompanied by {name}, phone {phone}."), lexicon));
    }
    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for tier in Tier::ALL {
        let sentences = &mut sections[tier.index()];
        if sentences.is_empty() {
            continue;
        }
        sentences.shuffle(rng);
        text.push_str(&format!("\n{}:", tier.section()));
        for s in sentences.iter() {
            text.push(' ');
            let base = text.len();
            text.push_str(&s.text);
            slots.push((s.question, base + s.slot.0, base + s.slot.1));
        }
    }

    let tokens = tokenize(&text);
    for (qi, start, end) in slots {
        let span = locate_span(&tokens, start, end)
            .ok_or_else(|| Error::SlotAlignment { question: doc.catalog.questions()[qi].id.clone() })?;
        annotations[qi].span = Some(span);
    }
    Ok(LabeledNote { id, age, sex, text, icd_code: profile.icd_code.clone(), annotations })
}

/// Maps a byte range onto the tokens that exactly cover it.
pub(crate) fn locate_span(tokens: &[Token], start: usize, end: usize) -> Option<TokenSpan> {
    let first = tokens.iter().position(|t| t.char_start == start)?;
    let last = tokens[first..].iter().position(|t| t.char_end == end)? + first;
    Some(TokenSpan { start: first, end: last + 1 })
}
