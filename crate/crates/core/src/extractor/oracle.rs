use std::collections::HashMap;

use super::{ExtractionResult, Extractor};
use crate::corpus::{Annotation, LabeledCorpus, NoteRef, QuestionCatalog, TokenSpan};
use crate::error::{Error, Result};

/// Replays gold annotations. Knows only the notes it was built from.
#[derive(Debug, Clone)]
pub struct OracleExtractor {
    gold: HashMap<String, Vec<Annotation>>,
    catalog_digest: String,
}

pub fn make_oracle(corpus: &LabeledCorpus) -> OracleExtractor {
    let gold = corpus.notes.iter().map(|n| (n.id.clone(), n.annotations.clone())).collect();
    OracleExtractor { gold, catalog_digest: corpus.catalog_digest.clone() }
}

impl OracleExtractor {
    /// Adds the notes of another corpus built on the same catalog.
    pub fn extend(&mut self, corpus: &LabeledCorpus) -> Result<()> {
        if corpus.catalog_digest != self.catalog_digest {
            return Err(Error::CatalogMismatch {
                expected: self.catalog_digest.clone(),
                found: corpus.catalog_digest.clone(),
            });
        }
        for n in &corpus.notes {
            self.gold.insert(n.id.clone(), n.annotations.clone());
        }
        Ok(())
    }

    pub(crate) fn gold(&self, note_id: &str) -> Result<&[Annotation]> {
        self.gold.get(note_id).map(Vec::as_slice).ok_or_else(|| Error::UnknownNote(note_id.to_string()))
    }
}

pub(crate) fn replay(annotation: &Annotation) -> ExtractionResult {
    match annotation.span {
        Some(span) if annotation.answered => ExtractionResult {
            question_id: annotation.question_id.clone(),
            answerable_prob: 1.0,
            span: TokenSpan { start: span.start + 1, end: span.end + 1 },
            binary_prob: annotation.binary_answer.map(f64::from),
            numeric_value: annotation.numeric_value,
        },
        _ => ExtractionResult::unanswered(&annotation.question_id, 0.0),
    }
}

/// Annotations are stored in catalog order; fall back to a scan otherwise.
pub(crate) fn annotation_for<'a>(annotations: &'a [Annotation], position: usize, id: &str) -> Option<&'a Annotation> {
    annotations
        .get(position)
        .filter(|a| a.question_id == id)
        .or_else(|| annotations.iter().find(|a| a.question_id == id))
}

impl Extractor for OracleExtractor {
    fn extract(&self, note: NoteRef<'_>, catalog: &QuestionCatalog) -> Result<Vec<ExtractionResult>> {
        let gold = self.gold(note.id)?;
        catalog
            .questions()
            .iter()
            .enumerate()
            .map(|(i, q)| {
                annotation_for(gold, i, &q.id).map(replay).ok_or_else(|| Error::MissingQuestion(q.id.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_catalog, generate_corpus, CatalogConfig, GenerateConfig};
    use crate::extractor::evaluate_extractor;

    #[test]
    fn oracle_reproduces_gold_and_scores_perfectly() {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: 30, ..GenerateConfig::default() }, 5).unwrap();
        let oracle = make_oracle(&corpus);
        for note in &corpus.notes {
            let n_tokens = crate::text::tokenize(&note.text).len();
            let results = oracle.extract(note.as_ref(), &doc.catalog).unwrap();
            for ((q, gold), r) in doc.catalog.questions().iter().zip(&note.annotations).zip(&results) {
                r.validate(q.answer_kind, n_tokens, oracle.threshold()).unwrap();
                assert_eq!(r.note_span(), gold.span);
                assert_eq!(r.binary_prob, gold.binary_answer.map(f64::from));
                assert_eq!(r.numeric_value, gold.numeric_value);
            }
        }
        let report = evaluate_extractor(&oracle, &corpus, &doc.catalog).unwrap();
        assert_eq!((report.span_f1, report.binary_mcc, report.impossible_mcc), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unknown_note_is_an_error() {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: 1, ..GenerateConfig::default() }, 5).unwrap();
        let oracle = make_oracle(&corpus);
        let stranger = NoteRef { id: "elsewhere", text: "" };
        assert!(matches!(oracle.extract(stranger, &doc.catalog), Err(Error::UnknownNote(_))));
    }
}
