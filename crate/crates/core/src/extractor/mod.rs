//! Clinical feature extraction: for every (note, question) pair, decide
//! whether the note answers the question, where, and what the answer is.
//!
//! Spans in [`ExtractionResult`] are indexed over the note's tokens with a
//! start token prepended, so token `i` of the note is index `i + 1` and the
//! span `[0, 1)` — the start token alone — means "not answered".

mod lexicon;
mod logistic;
mod noisy;
mod oracle;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerKind, LabeledCorpus, NoteRef, QuestionCatalog, TokenSpan};
use crate::error::{Error, Result};
use crate::metrics::{token_span_f1, BinaryCounts};

pub use lexicon::{
    train_lexicon_extractor, LexiconConfig, LexiconExtractorModel, LexiconTrainingReport, QuestionModel,
};
pub use noisy::{make_noisy, NoiseConfig, NoisyExtractor, NumericStats};
pub use oracle::{make_oracle, OracleExtractor};

/// The "not answered" span.
pub const SENTINEL: TokenSpan = TokenSpan { start: 0, end: 1 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub question_id: String,
    pub answerable_prob: f64,
    /// Sentinel-shifted token span; [`SENTINEL`] when unanswered.
    pub span: TokenSpan,
    /// Probability that the answer is affirmative (binary questions only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_value: Option<f64>,
}

impl ExtractionResult {
    pub fn unanswered(question_id: impl Into<String>, answerable_prob: f64) -> Self {
        Self {
            question_id: question_id.into(),
            answerable_prob,
            span: SENTINEL,
            binary_prob: None,
            numeric_value: None,
        }
    }

    pub fn answered(&self) -> bool {
        self.span != SENTINEL
    }

    /// The span over the note's own tokens, `None` when unanswered.
    pub fn note_span(&self) -> Option<TokenSpan> {
        self.answered().then(|| TokenSpan { start: self.span.start - 1, end: self.span.end - 1 })
    }

    /// Checks the sentinel and threshold invariants against a note with
    /// `token_count` tokens.
    pub fn validate(&self, kind: AnswerKind, token_count: usize, threshold: f64) -> Result<()> {
        let bad = |reason: &str| Error::InvalidConfig(format!("result for `{}`: {reason}", self.question_id));
        if !(0.0..=1.0).contains(&self.answerable_prob) {
            return Err(bad("answerable_prob outside [0, 1]"));
        }
        if self.answered() != (self.answerable_prob >= threshold) {
            return Err(bad("answered flag disagrees with the threshold"));
        }
        if self.answered()
            && !(1 <= self.span.start && self.span.start < self.span.end && self.span.end <= token_count + 1)
        {
            return Err(Error::InvalidSpan { start: self.span.start, end: self.span.end });
        }
        let (binary, numeric) = match kind {
            AnswerKind::Binary => (self.answered(), false),
            AnswerKind::Numeric => (false, self.answered()),
        };
        if self.binary_prob.is_some() != binary || self.numeric_value.is_some() != numeric {
            return Err(bad("answer payload does not match the answer kind"));
        }
        if self.binary_prob.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return Err(bad("binary_prob outside [0, 1]"));
        }
        Ok(())
    }
}

/// Anything that can answer the catalog against a note.
///
/// Implementations must be pure: the same note always yields the same
/// results, independent of call order or thread.
pub trait Extractor: Send + Sync {
    fn extract(&self, note: NoteRef<'_>, catalog: &QuestionCatalog) -> Result<Vec<ExtractionResult>>;

    /// Results with `answerable_prob` at or above this value are answered.
    fn threshold(&self) -> f64 {
        0.5
    }

    /// Tokenizer version the extractor's spans refer to.
    fn tokenizer_version(&self) -> &str {
        crate::text::TOKENIZER_VERSION
    }
}

/// Extracts every note of a corpus, checking the tokenizer version first.
pub fn extract_corpus(
    extractor: &dyn Extractor,
    corpus: &LabeledCorpus,
    catalog: &QuestionCatalog,
) -> Result<Vec<Vec<ExtractionResult>>> {
    if corpus.tokenizer_version != extractor.tokenizer_version() {
        return Err(Error::TokenizerMismatch {
            expected: extractor.tokenizer_version().to_string(),
            found: corpus.tokenizer_version.clone(),
        });
    }
    corpus.check_catalog(catalog)?;
    corpus.notes.iter().map(|n| extractor.extract(n.as_ref(), catalog)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorReport {
    pub span_f1: f64,
    pub binary_mcc: f64,
    pub impossible_mcc: f64,
}

/// Scores an extractor against the gold annotations of `test`.
///
/// Span F1 averages over every (note, question) pair; binary MCC pools the
/// binary answers of pairs both sides mark answered; impossible MCC pools
/// predicted-answered against gold-answered.
pub fn evaluate_extractor(
    extractor: &dyn Extractor,
    test: &LabeledCorpus,
    catalog: &QuestionCatalog,
) -> Result<ExtractorReport> {
    if test.is_empty() {
        return Err(Error::Empty("test corpus"));
    }
    let predictions = extract_corpus(extractor, test, catalog)?;
    let mut f1_sum = 0.0;
    let mut pairs = 0usize;
    let mut binary = BinaryCounts::default();
    let mut impossible = BinaryCounts::default();
    for (note, results) in test.notes.iter().zip(&predictions) {
        for (question, (gold, pred)) in catalog.questions().iter().zip(note.annotations.iter().zip(results)) {
            f1_sum += token_span_f1(pred.note_span(), gold.span)?;
            pairs += 1;
            impossible.record(pred.answered(), gold.answered);
            if question.answer_kind == AnswerKind::Binary && gold.answered && pred.answered() {
                let predicted = pred.binary_prob.expect("answered binary result carries a probability") >= 0.5;
                binary.record(predicted, gold.binary_answer == Some(1));
            }
        }
    }
    let binary_mcc = if binary.total() == 0 { 0.0 } else { binary.mcc()? };
    Ok(ExtractorReport { span_f1: f1_sum / pairs as f64, binary_mcc, impossible_mcc: impossible.mcc()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_catalog, generate_corpus, CatalogConfig, CatalogDocument, GenerateConfig};

    struct Silent;

    impl Extractor for Silent {
        fn extract(&self, _: NoteRef<'_>, catalog: &QuestionCatalog) -> Result<Vec<ExtractionResult>> {
            Ok(catalog.questions().iter().map(|q| ExtractionResult::unanswered(&q.id, 0.0)).collect())
        }
    }

    fn fixture(n: usize) -> (CatalogDocument, LabeledCorpus) {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: n, ..GenerateConfig::default() }, 11).unwrap();
        (doc, corpus)
    }

    #[test]
    fn always_unanswered_scores_the_unanswered_fraction() {
        let (doc, corpus) = fixture(40);
        let pairs = corpus.len() * doc.catalog.len();
        let unanswered = corpus.notes.iter().flat_map(|n| &n.annotations).filter(|a| !a.answered).count();
        let report = evaluate_extractor(&Silent, &corpus, &doc.catalog).unwrap();
        assert!((report.span_f1 - unanswered as f64 / pairs as f64).abs() < 1e-12);
        assert_eq!(report.impossible_mcc, 0.0);
        assert_eq!(report.binary_mcc, 0.0);
    }

    #[test]
    fn empty_test_rejected() {
        let (doc, corpus) = fixture(2);
        let empty = corpus.with_notes(Vec::new());
        assert!(matches!(evaluate_extractor(&Silent, &empty, &doc.catalog), Err(Error::Empty(_))));
    }

    #[test]
    fn tokenizer_mismatch_rejected() {
        let (doc, mut corpus) = fixture(2);
        corpus.tokenizer_version = "other/0".into();
        assert!(matches!(extract_corpus(&Silent, &corpus, &doc.catalog), Err(Error::TokenizerMismatch { .. })));
    }

    #[test]
    fn sentinel_round_trip() {
        let r = ExtractionResult { span: TokenSpan { start: 3, end: 5 }, ..ExtractionResult::unanswered("q", 0.9) };
        assert_eq!(r.note_span(), Some(TokenSpan { start: 2, end: 4 }));
        assert_eq!(ExtractionResult::unanswered("q", 0.1).note_span(), None);
    }
}
