//! Design-matrix encoding of annotations and extraction results.
//!
//! Each catalog question owns two adjacent columns: the answer and an
//! "answered" indicator. Binary answers encode as +1 / −1, numeric answers
//! as standardized values, and unanswered questions as 0 with indicator 0.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerKind, LabeledNote, QuestionCatalog, Tier};
use crate::error::{Error, Result};
use crate::extractor::ExtractionResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStat {
    pub question_id: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-question location and scale of numeric answers, fitted on the
/// answered rows of a training set (population standard deviation).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub entries: Vec<NumericStat>,
}

impl NumericStats {
    /// Questions never answered get mean 0; a zero spread is replaced by 1.
    pub fn fit(notes: &[LabeledNote], catalog: &QuestionCatalog) -> Result<Self> {
        let mut entries = Vec::new();
        for (qi, q) in catalog.questions().iter().enumerate() {
            if q.answer_kind != AnswerKind::Numeric {
                continue;
            }
            let mut values = Vec::new();
            for note in notes {
                let a = annotation(note, qi, &q.id)?;
                if let (true, Some(v)) = (a.answered, a.numeric_value) {
                    values.push(v);
                }
            }
            let n = values.len() as f64;
            let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / n };
            let var = if values.is_empty() { 0.0 } else { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n };
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            entries.push(NumericStat { question_id: q.id.clone(), mean, std });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, question_id: &str) -> Option<(f64, f64)> {
        self.entries.iter().find(|e| e.question_id == question_id).map(|e| (e.mean, e.std))
    }

    fn require(&self, question_id: &str) -> Result<(f64, f64)> {
        self.get(question_id).ok_or_else(|| Error::MissingQuestion(question_id.to_string()))
    }
}

fn annotation<'a>(note: &'a LabeledNote, position: usize, id: &str) -> Result<&'a crate::corpus::Annotation> {
    note.annotations
        .get(position)
        .filter(|a| a.question_id == id)
        .or_else(|| note.annotations.iter().find(|a| a.question_id == id))
        .ok_or_else(|| Error::MissingQuestion(id.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Answer,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub question_id: String,
    pub role: ColumnRole,
    pub tier: Tier,
}

impl Column {
    pub fn name(&self) -> String {
        match self.role {
            ColumnRole::Answer => self.question_id.clone(),
            ColumnRole::Indicator => format!("{}__answered", self.question_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierMask {
    pub tier: Tier,
    pub columns: Vec<usize>,
}

/// Row-major dense matrix with its column schema and row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    note_ids: Vec<String>,
    labels: Vec<String>,
    columns: Vec<Column>,
    data: Vec<f64>,
    stats: NumericStats,
}

impl FeatureMatrix {
    /// Builds a matrix from raw rows with generic column names; used for
    /// experiments outside the catalog schema.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
        }
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch { expected: width, found: r.len() });
        }
        let columns = (0..width)
            .map(|j| Column { question_id: format!("x{j}"), role: ColumnRole::Answer, tier: Tier::One })
            .collect();
        Ok(Self {
            note_ids: (0..rows.len()).map(|i| format!("row{i}")).collect(),
            labels,
            columns,
            data: rows.concat(),
            stats: NumericStats::default(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.note_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.n_cols();
        &self.data[i * f..(i + 1) * f]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(Column::name).collect()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn note_ids(&self) -> &[String] {
        &self.note_ids
    }

    pub fn stats(&self) -> &NumericStats {
        &self.stats
    }

    pub fn tier_mask(&self, tier: Tier) -> TierMask {
        let columns = self.columns.iter().enumerate().filter(|(_, c)| c.tier <= tier).map(|(j, _)| j).collect();
        TierMask { tier, columns }
    }

    /// Restriction to the columns of questions at or below `tier`.
    pub fn tier_view(&self, tier: Tier) -> FeatureMatrix {
        self.select_columns(&self.tier_mask(tier).columns)
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let data = (0..self.n_rows()).flat_map(|i| cols.iter().map(move |&j| self.get(i, j))).collect();
        FeatureMatrix {
            note_ids: self.note_ids.clone(),
            labels: self.labels.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            data,
            stats: self.stats.clone(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            note_ids: rows.iter().map(|&i| self.note_ids[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i].clone()).collect(),
            columns: self.columns.clone(),
            data: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            stats: self.stats.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.columns != other.columns {
            return Err(Error::DimensionMismatch { expected: self.n_cols(), found: other.n_cols() });
        }
        let mut out = self.clone();
        out.note_ids.extend_from_slice(&other.note_ids);
        out.labels.extend_from_slice(&other.labels);
        out.data.extend_from_slice(&other.data);
        Ok(out)
    }

    /// Same rows and values with the labels replaced.
    pub fn with_labels(&self, labels: Vec<String>) -> Result<FeatureMatrix> {
        if labels.len() != self.n_rows() {
            return Err(Error::DimensionMismatch { expected: self.n_rows(), found: labels.len() });
        }
        Ok(FeatureMatrix { labels, ..self.clone() })
    }

    /// CSV with `note_id`, `icd_code` and one column per feature.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["note_id".to_string(), "icd_code".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut record = vec![self.note_ids[i].clone(), self.labels[i].clone()];
            record.extend(self.row(i).iter().map(f64::to_string));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            columns: self.columns.clone(),
            tier_masks: Tier::ALL.iter().map(|&t| self.tier_mask(t)).collect(),
            stats: self.stats.clone(),
        }
    }

    /// Writes `<stem>.csv` and the `<stem>.schema.json` sidecar into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        let file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let schema = serde_json::to_string_pretty(&self.schema())?;
        std::fs::write(dir.join(format!("{stem}.schema.json")), schema + "\n")?;
        Ok(())
    }
}

/// Column schema, tier masks and standardization statistics of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
    pub tier_masks: Vec<TierMask>,
    pub stats: NumericStats,
}

fn schema_columns(catalog: &QuestionCatalog) -> Vec<Column> {
    catalog
        .questions()
        .iter()
        .flat_map(|q| {
            [ColumnRole::Answer, ColumnRole::Indicator].map(|role| Column {
                question_id: q.id.clone(),
                role,
                tier: q.tier,
            })
        })
        .collect()
}

/// Encodes gold annotations. Numeric answers are standardized with `stats`,
/// which should come from [`NumericStats::fit`] on the training rows only.
pub fn encode_gold(notes: &[LabeledNote], catalog: &QuestionCatalog, stats: &NumericStats) -> Result<FeatureMatrix> {
    let questions = catalog.questions();
    let mut data = Vec::with_capacity(notes.len() * 2 * questions.len());
    for note in notes {
        if let Some(a) = note.annotations.iter().find(|a| catalog.position(&a.question_id).is_none()) {
            return Err(Error::UnknownQuestion(a.question_id.clone()));
        }
        for (qi, q) in questions.iter().enumerate() {
            let a = annotation(note, qi, &q.id)?;
            let value = match (a.answered, q.answer_kind) {
                (false, _) => None,
                (true, AnswerKind::Binary) => a.binary_answer.map(|b| if b == 1 { 1.0 } else { -1.0 }),
                (true, AnswerKind::Numeric) => match a.numeric_value {
                    Some(v) => {
                        let (mean, std) = stats.require(&q.id)?;
                        Some((v - mean) / std)
                    }
                    None => None,
                },
            };
            push_pair(&mut data, value);
        }
    }
    Ok(FeatureMatrix {
        note_ids: notes.iter().map(|n| n.id.clone()).collect(),
        labels: notes.iter().map(|n| n.icd_code.clone()).collect(),
        columns: schema_columns(catalog),
        data,
        stats: stats.clone(),
    })
}

fn push_pair(data: &mut Vec<f64>, value: Option<f64>) {
    match value {
        Some(v) => data.extend([v, 1.0]),
        None => data.extend([0.0, 0.0]),
    }
}

/// Encodes extractor output for `notes` (whose annotations are not read).
/// `binary_prob ≥ 0.5` encodes as +1; numeric values use the given `stats`.
pub fn encode_extracted(
    notes: &[LabeledNote],
    results: &[Vec<ExtractionResult>],
    catalog: &QuestionCatalog,
    stats: &NumericStats,
) -> Result<FeatureMatrix> {
    if notes.len() != results.len() {
        return Err(Error::DimensionMismatch { expected: notes.len(), found: results.len() });
    }
    let questions = catalog.questions();
    let mut data = Vec::with_capacity(notes.len() * 2 * questions.len());
    for list in results {
        for (qi, q) in questions.iter().enumerate() {
            let r = list
                .get(qi)
                .filter(|r| r.question_id == q.id)
                .or_else(|| list.iter().find(|r| r.question_id == q.id))
                .ok_or_else(|| Error::MissingQuestion(q.id.clone()))?;
            let value = if !r.answered() {
                None
            } else {
                match q.answer_kind {
                    AnswerKind::Binary => r.binary_prob.map(|p| if p >= 0.5 { 1.0 } else { -1.0 }),
                    AnswerKind::Numeric => match r.numeric_value {
                        Some(v) => {
                            let (mean, std) = stats.require(&q.id)?;
                            Some((v - mean) / std)
                        }
                        None => None,
                    },
                }
            };
            push_pair(&mut data, value);
        }
    }
    Ok(FeatureMatrix {
        note_ids: notes.iter().map(|n| n.id.clone()).collect(),
        labels: notes.iter().map(|n| n.icd_code.clone()).collect(),
        columns: schema_columns(catalog),
        data,
        stats: stats.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        default_catalog, generate_corpus, CatalogConfig, CatalogDocument, GenerateConfig, LabeledCorpus,
    };
    use crate::extractor::{extract_corpus, make_noisy, make_oracle, NoiseConfig, SENTINEL};
    use proptest::prelude::*;

    fn fixture(n: usize) -> (CatalogDocument, LabeledCorpus) {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: n, ..GenerateConfig::default() }, 8).unwrap();
        (doc, corpus)
    }

    #[test]
    fn negative_cough_encodes_minus_one() {
        let (doc, corpus) = fixture(60);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let m = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
        let q = doc.catalog.position("cough").unwrap();
        let (i, _) = corpus
            .notes
            .iter()
            .enumerate()
            .find(|(_, n)| n.annotations[q].binary_answer == Some(0))
            .expect("some note denies cough");
        assert_eq!((m.get(i, 2 * q), m.get(i, 2 * q + 1)), (-1.0, 1.0));
    }

    #[test]
    fn unanswered_note_is_all_zero() {
        let (doc, corpus) = fixture(1);
        let mut note = corpus.notes[0].clone();
        for a in &mut note.annotations {
            *a = crate::corpus::Annotation::unanswered(&a.question_id);
        }
        let m = encode_gold(&[note], &doc.catalog, &NumericStats::fit(&corpus.notes, &doc.catalog).unwrap()).unwrap();
        assert!(m.row(0).iter().all(|v| *v == 0.0));
        assert_eq!(m.n_cols(), 2 * doc.catalog.len());
    }

    #[test]
    fn numeric_columns_are_standardized_on_training_rows() {
        let (doc, corpus) = fixture(200);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let m = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
        for (qi, q) in doc.catalog.questions().iter().enumerate() {
            if q.answer_kind != AnswerKind::Numeric {
                continue;
            }
            let vals: Vec<f64> =
                (0..m.n_rows()).filter(|&i| m.get(i, 2 * qi + 1) == 1.0).map(|i| m.get(i, 2 * qi)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "{}: mean {mean}", q.id);
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "{}: sd {}", q.id, var.sqrt());
        }
    }

    #[test]
    fn unknown_question_rejected() {
        let (doc, corpus) = fixture(1);
        let mut note = corpus.notes[0].clone();
        note.annotations.push(crate::corpus::Annotation::unanswered("not_a_question"));
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        assert!(matches!(encode_gold(&[note], &doc.catalog, &stats), Err(Error::UnknownQuestion(_))));
    }

    #[test]
    fn oracle_encoding_equals_gold_encoding() {
        let (doc, corpus) = fixture(40);
        let stats = NumericStats::fit(&corpus.notes[..20], &doc.catalog).unwrap();
        let results = extract_corpus(&make_oracle(&corpus), &corpus, &doc.catalog).unwrap();
        let a = encode_extracted(&corpus.notes, &results, &doc.catalog, &stats).unwrap();
        let b = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn half_probability_is_affirmative() {
        let (doc, corpus) = fixture(1);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let mut results = extract_corpus(&make_oracle(&corpus), &corpus, &doc.catalog).unwrap();
        let q = doc.catalog.position("cough").unwrap();
        results[0][q] = ExtractionResult {
            span: crate::corpus::TokenSpan { start: 1, end: 2 },
            binary_prob: Some(0.5),
            ..ExtractionResult::unanswered("cough", 1.0)
        };
        let m = encode_extracted(&corpus.notes, &results, &doc.catalog, &stats).unwrap();
        assert_eq!((m.get(0, 2 * q), m.get(0, 2 * q + 1)), (1.0, 1.0));
    }

    #[test]
    fn missing_result_rejected() {
        let (doc, corpus) = fixture(1);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let mut results = extract_corpus(&make_oracle(&corpus), &corpus, &doc.catalog).unwrap();
        results[0].pop();
        assert!(matches!(
            encode_extracted(&corpus.notes, &results, &doc.catalog, &stats),
            Err(Error::MissingQuestion(_))
        ));
    }

    #[test]
    fn hallucination_only_turns_indicators_on() {
        let (doc, corpus) = fixture(20);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let clean = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
        let config = NoiseConfig { eps_hallucinate: 0.3, ..NoiseConfig::default() };
        let noisy = make_noisy(&corpus, &doc.catalog, config, 17).unwrap();
        let results = extract_corpus(&noisy, &corpus, &doc.catalog).unwrap();
        let dirty = encode_extracted(&corpus.notes, &results, &doc.catalog, &stats).unwrap();
        let mut changed = 0;
        for i in 0..clean.n_rows() {
            for q in 0..doc.catalog.len() {
                let hallucinated = results[i][q].span != SENTINEL && !corpus.notes[i].annotations[q].answered;
                let ind = 2 * q + 1;
                if hallucinated {
                    assert_eq!((clean.get(i, ind), dirty.get(i, ind)), (0.0, 1.0));
                    changed += 1;
                } else {
                    assert_eq!(clean.get(i, ind), dirty.get(i, ind));
                    assert_eq!(clean.get(i, 2 * q), dirty.get(i, 2 * q));
                }
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn tier_views_nest() {
        let (doc, corpus) = fixture(5);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let m = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
        assert_eq!(m.tier_view(Tier::Three), m);
        let counts: Vec<usize> = Tier::ALL.iter().map(|&t| m.tier_view(t).n_cols()).collect();
        assert_eq!(counts, vec![88, 122, 128]);
        let t1 = m.tier_view(Tier::One);
        let tier2_question = doc.catalog.questions().iter().find(|q| q.tier == Tier::Two).unwrap();
        assert!(t1.columns().iter().all(|c| c.question_id != tier2_question.id));
        let masks: Vec<TierMask> = Tier::ALL.iter().map(|&t| m.tier_mask(t)).collect();
        assert!(masks[0].columns.iter().all(|c| masks[1].columns.contains(c)));
        assert!(masks[1].columns.iter().all(|c| masks[2].columns.contains(c)));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (doc, corpus) = fixture(3);
        let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
        let m = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("note_id,icd_code,headache,headache__answered"));
        assert_eq!(lines[1].split(',').count(), 2 + m.n_cols());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn encoding_is_label_blind(seed in 0u64..1000) {
            let (doc, corpus) = fixture(12);
            let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
            let mut shuffled = corpus.notes.clone();
            let mut labels: Vec<String> = shuffled.iter().map(|n| n.icd_code.clone()).collect();
            use rand::seq::SliceRandom;
            labels.shuffle(&mut crate::digest::rng(seed));
            for (n, l) in shuffled.iter_mut().zip(labels) {
                n.icd_code = l;
            }
            let a = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
            let b = encode_gold(&shuffled, &doc.catalog, &stats).unwrap();
            prop_assert_eq!(a.data(), b.data());
        }

        #[test]
        fn tier_views_commute_with_row_selection(rows in proptest::collection::vec(0usize..12, 1..12), tier in 1u8..=3) {
            let (doc, corpus) = fixture(12);
            let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
            let m = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
            let tier = Tier::try_from(tier).unwrap();
            prop_assert_eq!(m.select_rows(&rows).tier_view(tier), m.tier_view(tier).select_rows(&rows));
        }

        #[test]
        fn indicator_zero_implies_answer_zero(seed in 0u64..50) {
            let doc = default_catalog(&CatalogConfig::default()).unwrap();
            let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: 4, ..GenerateConfig::default() }, seed).unwrap();
            let stats = NumericStats::fit(&corpus.notes, &doc.catalog).unwrap();
            let m = encode_gold(&corpus.notes, &doc.catalog, &stats).unwrap();
            for i in 0..m.n_rows() {
                for q in 0..doc.catalog.len() {
                    if m.get(i, 2 * q + 1) == 0.0 {
                        prop_assert_eq!(m.get(i, 2 * q), 0.0);
                    }
                }
            }
        }
    }
}
