//! A trainable extractor that anchors answers on n-grams seen inside gold
//! spans.
//!
//! Every question gets a bank of token n-grams (numbers folded to `<num>`,
//! negation cues left out) weighted by how few other questions share them.
//! At extraction time the bank's matches are merged into contiguous runs; the
//! best-scoring run becomes the candidate span, a logistic over its
//! normalized score gives the answerability, and a second logistic over the
//! score and the nearby negation cues gives the polarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::logistic::Logistic;
use super::{ExtractionResult, Extractor};
use crate::corpus::{AnswerKind, LabeledCorpus, NoteRef, QuestionCatalog, TokenSpan, NEGATION_CUES};
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::metrics::BinaryCounts;
use crate::text::{tokenize, Token, TOKENIZER_VERSION};

const NUM: &str = "<num>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    pub max_ngram: usize,
    /// Tokens on each side of a run searched for negation cues.
    pub cue_window: usize,
    pub negation_cues: Vec<String>,
    /// Ridge strength of the calibration fits.
    pub ridge: f64,
    /// Recorded for provenance; training is deterministic.
    pub seed: u64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        Self {
            max_ngram: 5,
            cue_window: 2,
            negation_cues: NEGATION_CUES.iter().map(|s| s.to_string()).collect(),
            ridge: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionModel {
    pub question_id: String,
    pub answer_kind: AnswerKind,
    /// n-gram → weight.
    pub patterns: BTreeMap<String, f64>,
    /// Median score of gold spans; run scores are divided by it.
    pub reference_score: f64,
    pub answerability: Logistic,
    /// Features: negation-cue count, normalized score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Logistic>,
    /// Numeric answer used when the span holds no number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_fallback: Option<f64>,
    /// Never answered in training: always predicts "not answered".
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconTrainingReport {
    pub threshold: f64,
    pub training_impossible_mcc: f64,
    pub degenerate_questions: Vec<String>,
    pub pattern_counts: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stored {
    tokenizer_version: String,
    catalog_digest: String,
    config: LexiconConfig,
    threshold: f64,
    questions: Vec<QuestionModel>,
}

/// Trained lexicon extractor. Serializes to a single JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Stored", into = "Stored")]
pub struct LexiconExtractorModel {
    stored: Stored,
    index: HashMap<String, Vec<(usize, f64)>>,
    cues: BTreeSet<String>,
}

impl From<Stored> for LexiconExtractorModel {
    fn from(stored: Stored) -> Self {
        let mut index: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        for (q, model) in stored.questions.iter().enumerate() {
            for (gram, &w) in &model.patterns {
                index.entry(gram.clone()).or_default().push((q, w));
            }
        }
        let cues = stored.config.negation_cues.iter().map(|c| c.to_lowercase()).collect();
        Self { stored, index, cues }
    }
}

impl From<LexiconExtractorModel> for Stored {
    fn from(model: LexiconExtractorModel) -> Self {
        model.stored
    }
}

impl PartialEq for LexiconExtractorModel {
    fn eq(&self, other: &Self) -> bool {
        self.stored == other.stored
    }
}

fn normalize(token: &Token) -> String {
    if token.is_number() {
        NUM.to_string()
    } else {
        token.text.to_lowercase()
    }
}

fn is_boundary(token: &str) -> bool {
    matches!(token, "." | ":" | ";" | "\n")
}

/// A tokenized note prepared for matching.
struct Prepared {
    tokens: Vec<Token>,
    norm: Vec<String>,
    cue: Vec<bool>,
}

impl Prepared {
    fn new(text: &str, cues: &BTreeSet<String>) -> Self {
        let tokens = tokenize(text);
        let norm: Vec<String> = tokens.iter().map(normalize).collect();
        let cue = norm.iter().map(|t| cues.contains(t)).collect();
        Self { tokens, norm, cue }
    }

    /// Calls `f(start, end, key)` for every cue-free n-gram.
    fn for_each_ngram(&self, range: std::ops::Range<usize>, max_n: usize, mut f: impl FnMut(usize, usize, &str)) {
        let mut key = String::new();
        for i in range.clone() {
            key.clear();
            for j in i..(i + max_n).min(range.end) {
                if self.cue[j] {
                    break;
                }
                if j > i {
                    key.push(' ');
                }
                key.push_str(&self.norm[j]);
                f(i, j + 1, &key);
            }
        }
    }

    fn cue_count(&self, span: TokenSpan, window: usize) -> usize {
        let mut count = (span.start..span.end).filter(|&i| self.cue[i]).count();
        for i in (span.start.saturating_sub(window)..span.start).rev() {
            if is_boundary(&self.norm[i]) {
                break;
            }
            count += usize::from(self.cue[i]);
        }
        for i in span.end..(span.end + window).min(self.norm.len()) {
            if is_boundary(&self.norm[i]) {
                break;
            }
            count += usize::from(self.cue[i]);
        }
        count
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    run: TokenSpan,
    score: f64,
}

impl LexiconExtractorModel {
    pub fn threshold(&self) -> f64 {
        self.stored.threshold
    }

    pub fn questions(&self) -> &[QuestionModel] {
        &self.stored.questions
    }

    pub fn config(&self) -> &LexiconConfig {
        &self.stored.config
    }

    pub fn digest(&self) -> String {
        json_digest(&self.stored)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Best run per question.
    fn candidates(&self, note: &Prepared) -> Vec<Option<Candidate>> {
        let q = self.stored.questions.len();
        let mut hits: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); q];
        note.for_each_ngram(0..note.norm.len(), self.stored.config.max_ngram, |s, e, key| {
            if let Some(entries) = self.index.get(key) {
                for &(qi, w) in entries {
                    hits[qi].push((s, e, w));
                }
            }
        });
        hits.into_iter()
            .map(|mut h| {
                h.sort_by_key(|&(s, e, _)| (s, e));
                let mut best: Option<Candidate> = None;
                let mut current: Option<Candidate> = None;
                for (s, e, w) in h {
                    match current.as_mut() {
                        Some(c) if s <= c.run.end => {
                            c.run.end = c.run.end.max(e);
                            c.score += w;
                        }
                        _ => {
                            best = better(best, current);
                            current = Some(Candidate { run: TokenSpan { start: s, end: e }, score: w });
                        }
                    }
                }
                better(best, current)
            })
            .collect()
    }

    /// Span reported for a run: a negation cue just before it is included,
    /// as negated answers are written "no cough", "denies fever".
    fn answer_span(&self, note: &Prepared, run: TokenSpan) -> TokenSpan {
        let start = if run.start > 0 && note.cue[run.start - 1] { run.start - 1 } else { run.start };
        TokenSpan { start, end: run.end }
    }

    fn features(&self, qm: &QuestionModel, note: &Prepared, cand: Option<Candidate>) -> (f64, f64) {
        match cand {
            Some(c) => {
                let score = c.score / qm.reference_score;
                (score, note.cue_count(c.run, self.stored.config.cue_window) as f64)
            }
            None => (0.0, 0.0),
        }
    }

    fn decode_numeric(&self, qm: &QuestionModel, note: &Prepared, span: TokenSpan) -> f64 {
        let tail = (span.end..(span.end + 3).min(note.tokens.len())).take_while(|&i| !is_boundary(&note.norm[i]));
        (span.start..span.end)
            .chain(tail)
            .find_map(|i| note.tokens[i].numeric_value())
            .or(qm.numeric_fallback)
            .unwrap_or(0.0)
    }

    fn extract_prepared(&self, note: &Prepared) -> Vec<ExtractionResult> {
        let cands = self.candidates(note);
        self.stored
            .questions
            .iter()
            .zip(cands)
            .map(|(qm, cand)| {
                let cand = cand.filter(|_| !qm.degenerate);
                let Some(c) = cand else {
                    return ExtractionResult::unanswered(&qm.question_id, 0.0);
                };
                let (score, cues) = self.features(qm, note, Some(c));
                let p = qm.answerability.predict(&[score]);
                if p < self.stored.threshold {
                    return ExtractionResult::unanswered(&qm.question_id, p);
                }
                let span = self.answer_span(note, c.run);
                let mut r = ExtractionResult {
                    question_id: qm.question_id.clone(),
                    answerable_prob: p,
                    span: TokenSpan { start: span.start + 1, end: span.end + 1 },
                    binary_prob: None,
                    numeric_value: None,
                };
                match qm.answer_kind {
                    AnswerKind::Binary => {
                        let polarity = qm.polarity.as_ref().map_or(0.5, |m| m.predict(&[cues, score]));
                        r.binary_prob = Some(polarity);
                    }
                    AnswerKind::Numeric => r.numeric_value = Some(self.decode_numeric(qm, note, span)),
                }
                r
            })
            .collect()
    }
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.score > x.score { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) })
}

/// Trains on the gold annotations of `train`.
pub fn train_lexicon_extractor(
    train: &LabeledCorpus,
    catalog: &QuestionCatalog,
    config: &LexiconConfig,
) -> Result<(LexiconExtractorModel, LexiconTrainingReport)> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if config.max_ngram == 0 {
        return Err(Error::InvalidConfig("max_ngram must be at least 1".into()));
    }
    if !(config.ridge.is_finite() && config.ridge > 0.0) {
        return Err(Error::InvalidConfig("ridge must be positive".into()));
    }
    train.validate(catalog)?;
    let cues: BTreeSet<String> = config.negation_cues.iter().map(|c| c.to_lowercase()).collect();
    let notes: Vec<Prepared> = train.notes.iter().map(|n| Prepared::new(&n.text, &cues)).collect();
    let questions = catalog.questions();

    // Pattern banks.
    let mut banks: Vec<BTreeSet<String>> = vec![BTreeSet::new(); questions.len()];
    for (note, prepared) in train.notes.iter().zip(&notes) {
        for (qi, ann) in note.annotations.iter().enumerate() {
            if let Some(span) = ann.span {
                prepared.for_each_ngram(span.start..span.end, config.max_ngram, |_, _, key| {
                    banks[qi].insert(key.to_string());
                });
            }
        }
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for bank in &banks {
        for g in bank {
            *df.entry(g.as_str()).or_default() += 1;
        }
    }
    let non_empty = banks.iter().filter(|b| !b.is_empty()).count().max(1) as f64;
    let mut models: Vec<QuestionModel> = questions
        .iter()
        .zip(&banks)
        .map(|(q, bank)| QuestionModel {
            question_id: q.id.clone(),
            answer_kind: q.answer_kind,
            patterns: bank.iter().map(|g| (g.clone(), (1.0 + non_empty / df[g.as_str()] as f64).ln())).collect(),
            reference_score: 1.0,
            answerability: Logistic::constant(1, 0, 0),
            polarity: None,
            numeric_fallback: None,
            degenerate: bank.is_empty(),
        })
        .collect();

    // Gold-span scores fix each question's score scale.
    let mut gold_scores: Vec<Vec<f64>> = vec![Vec::new(); questions.len()];
    let mut numeric_values: Vec<Vec<f64>> = vec![Vec::new(); questions.len()];
    for (note, prepared) in train.notes.iter().zip(&notes) {
        for (qi, ann) in note.annotations.iter().enumerate() {
            if let Some(span) = ann.span {
                let mut score = 0.0;
                prepared.for_each_ngram(span.start..span.end, config.max_ngram, |_, _, key| {
                    score += models[qi].patterns.get(key).copied().unwrap_or(0.0);
                });
                gold_scores[qi].push(score);
            }
            if let Some(v) = ann.numeric_value {
                numeric_values[qi].push(v);
            }
        }
    }
    for (qi, m) in models.iter_mut().enumerate() {
        m.reference_score = median(std::mem::take(&mut gold_scores[qi])).filter(|s| *s > 0.0).unwrap_or(1.0);
        let values = &numeric_values[qi];
        if !values.is_empty() {
            m.numeric_fallback = Some(values.iter().sum::<f64>() / values.len() as f64);
        }
    }

    // Calibrations over the model's own candidates on the training notes.
    let mut model = LexiconExtractorModel::from(Stored {
        tokenizer_version: TOKENIZER_VERSION.to_string(),
        catalog_digest: catalog.digest(),
        config: config.clone(),
        threshold: 0.5,
        questions: models,
    });
    let n_q = questions.len();
    let mut answer_x: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_q];
    let mut answer_y: Vec<Vec<bool>> = vec![Vec::new(); n_q];
    let mut polar_x: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_q];
    let mut polar_y: Vec<Vec<bool>> = vec![Vec::new(); n_q];
    for (note, prepared) in train.notes.iter().zip(&notes) {
        let cands = model.candidates(prepared);
        for (qi, (ann, cand)) in note.annotations.iter().zip(cands).enumerate() {
            let qm = &model.stored.questions[qi];
            let (score, cues) = model.features(qm, prepared, cand);
            answer_x[qi].push(vec![score]);
            answer_y[qi].push(ann.answered);
            if let (Some(b), Some(_)) = (ann.binary_answer, cand) {
                polar_x[qi].push(vec![cues, score]);
                polar_y[qi].push(b == 1);
            }
        }
    }
    for (qi, qm) in model.stored.questions.iter_mut().enumerate() {
        qm.answerability = Logistic::fit(&answer_x[qi], &answer_y[qi], config.ridge);
        if qm.answer_kind == AnswerKind::Binary && !polar_y[qi].is_empty() {
            qm.polarity = Some(Logistic::fit(&polar_x[qi], &polar_y[qi], config.ridge));
        }
    }

    // Threshold maximizing pooled impossible-MCC on the training notes.
    let mut probs: Vec<(f64, bool)> = Vec::with_capacity(train.len() * n_q);
    for (note, prepared) in train.notes.iter().zip(&notes) {
        let cands = model.candidates(prepared);
        for ((qm, ann), cand) in model.stored.questions.iter().zip(&note.annotations).zip(cands) {
            let p = match cand.filter(|_| !qm.degenerate) {
                Some(c) => qm.answerability.predict(&[model.features(qm, prepared, Some(c)).0]),
                None => 0.0,
            };
            probs.push((p, ann.answered));
        }
    }
    let mut grid: Vec<f64> = (1..20).map(|i| f64::from(i) * 0.05).collect();
    grid.sort_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()));
    let mut best = (0.5, f64::NEG_INFINITY);
    for t in grid {
        let mut counts = BinaryCounts::default();
        for &(p, gold) in &probs {
            counts.record(p >= t, gold);
        }
        let mcc = counts.mcc()?;
        if mcc > best.1 {
            best = (t, mcc);
        }
    }
    model.stored.threshold = best.0;

    let report = LexiconTrainingReport {
        threshold: best.0,
        training_impossible_mcc: best.1,
        degenerate_questions: model
            .stored
            .questions
            .iter()
            .filter(|q| q.degenerate)
            .map(|q| q.question_id.clone())
            .collect(),
        pattern_counts: model.stored.questions.iter().map(|q| (q.question_id.clone(), q.patterns.len())).collect(),
    };
    Ok((model, report))
}

impl Extractor for LexiconExtractorModel {
    fn extract(&self, note: NoteRef<'_>, catalog: &QuestionCatalog) -> Result<Vec<ExtractionResult>> {
        if catalog.digest() != self.stored.catalog_digest {
            return Err(Error::CatalogMismatch {
                expected: self.stored.catalog_digest.clone(),
                found: catalog.digest(),
            });
        }
        Ok(self.extract_prepared(&Prepared::new(note.text, &self.cues)))
    }

    fn threshold(&self) -> f64 {
        self.stored.threshold
    }

    fn tokenizer_version(&self) -> &str {
        &self.stored.tokenizer_version
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_catalog, generate_corpus, CatalogConfig, CatalogDocument, GenerateConfig};
    use crate::extractor::evaluate_extractor;
    use crate::metrics::token_span_f1;

    fn fixture(n: usize, seed: u64) -> (CatalogDocument, LabeledCorpus) {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: n, ..GenerateConfig::default() }, seed).unwrap();
        (doc, corpus)
    }

    #[test]
    fn unique_span_is_recovered() {
        let (doc, corpus) = fixture(120, 1);
        let (model, _) = train_lexicon_extractor(&corpus, &doc.catalog, &LexiconConfig::default()).unwrap();
        let mut texts: HashMap<String, usize> = HashMap::new();
        let span_text = |note: &crate::corpus::LabeledNote, span: TokenSpan| {
            let toks = tokenize(&note.text);
            note.text[toks[span.start].char_start..toks[span.end - 1].char_end].to_lowercase()
        };
        for note in &corpus.notes {
            for a in &note.annotations {
                if let Some(s) = a.span {
                    *texts.entry(span_text(note, s)).or_default() += 1;
                }
            }
        }
        let mut checked = 0;
        for note in &corpus.notes {
            let results = model.extract(note.as_ref(), &doc.catalog).unwrap();
            for (a, r) in note.annotations.iter().zip(&results) {
                if let Some(s) = a.span {
                    if texts[&span_text(note, s)] == 1 {
                        assert!(
                            token_span_f1(r.note_span(), Some(s)).unwrap() >= 0.5,
                            "{} in {}",
                            a.question_id,
                            note.id
                        );
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn never_answered_question_is_degenerate() {
        let (doc, mut corpus) = fixture(40, 2);
        let target = doc.catalog.questions()[0].id.clone();
        for note in &mut corpus.notes {
            let a = &mut note.annotations[0];
            // drop the answer but keep the text: the phrase is now unlabeled noise
            *a = crate::corpus::Annotation::unanswered(&a.question_id);
        }
        let (model, report) = train_lexicon_extractor(&corpus, &doc.catalog, &LexiconConfig::default()).unwrap();
        assert_eq!(report.degenerate_questions, vec![target]);
        for note in &corpus.notes {
            assert!(!model.extract(note.as_ref(), &doc.catalog).unwrap()[0].answered());
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let (doc, corpus) = fixture(50, 3);
        let (a, _) = train_lexicon_extractor(&corpus, &doc.catalog, &LexiconConfig::default()).unwrap();
        let (b, _) = train_lexicon_extractor(&corpus.clone(), &doc.catalog, &LexiconConfig::default()).unwrap();
        assert_eq!(a.digest(), b.digest());
        let back = LexiconExtractorModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        let note = corpus.notes[0].as_ref();
        assert_eq!(back.extract(note, &doc.catalog).unwrap(), a.extract(note, &doc.catalog).unwrap());
    }

    #[test]
    fn results_obey_the_contract_and_generalize() {
        let (doc, train) = fixture(240, 4);
        let (_, test) = fixture(60, 5);
        let (model, _) = train_lexicon_extractor(&train, &doc.catalog, &LexiconConfig::default()).unwrap();
        for note in &test.notes {
            let n = tokenize(&note.text).len();
            let rs = model.extract(note.as_ref(), &doc.catalog).unwrap();
            assert_eq!(rs.len(), doc.catalog.len());
            for (q, r) in doc.catalog.questions().iter().zip(&rs) {
                r.validate(q.answer_kind, n, model.threshold()).unwrap();
            }
        }
        let report = evaluate_extractor(&model, &test, &doc.catalog).unwrap();
        assert!(report.span_f1 > 0.9, "{report:?}");
        assert!(report.impossible_mcc > 0.8, "{report:?}");
        assert!(report.binary_mcc > 0.8, "{report:?}");
    }
}
