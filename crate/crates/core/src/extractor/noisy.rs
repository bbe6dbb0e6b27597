use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::oracle::{make_oracle, OracleExtractor};
use super::{ExtractionResult, Extractor};
use crate::corpus::{AnswerKind, LabeledCorpus, NoteRef, QuestionCatalog, TokenSpan};
use crate::digest::rng_at;
use crate::error::{Error, Result};
use crate::text::tokenize;

pub use crate::features::NumericStats;

/// Corruption rates for [`NoisyExtractor`]. Each rate is multiplied by the
/// question's tier multiplier before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Answered → unanswered.
    pub eps_miss: f64,
    /// Unanswered → answered, with a random span and answer.
    pub eps_hallucinate: f64,
    /// Binary answer inverted.
    pub eps_flip: f64,
    /// Gaussian jitter on numeric answers, in units of the question's
    /// standard deviation.
    pub numeric_jitter_std: f64,
    pub tier_multipliers: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { eps_miss: 0.0, eps_hallucinate: 0.0, eps_flip: 0.0, numeric_jitter_std: 0.0, tier_multipliers: [1.0; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rates {
    miss: f64,
    hallucinate: f64,
    flip: f64,
    jitter: f64,
}

impl NoiseConfig {
    fn rates(&self) -> Result<[Rates; 3]> {
        if self.tier_multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidConfig("noise tier multipliers must be finite and non-negative".into()));
        }
        if !(self.numeric_jitter_std.is_finite() && self.numeric_jitter_std >= 0.0) {
            return Err(Error::InvalidConfig("numeric_jitter_std must be finite and non-negative".into()));
        }
        let mut out = [Rates { miss: 0.0, hallucinate: 0.0, flip: 0.0, jitter: 0.0 }; 3];
        for (t, m) in self.tier_multipliers.iter().enumerate() {
            let r = Rates {
                miss: self.eps_miss * m,
                hallucinate: self.eps_hallucinate * m,
                flip: self.eps_flip * m,
                jitter: self.numeric_jitter_std * m,
            };
            for (name, v) in [("eps_miss", r.miss), ("eps_hallucinate", r.hallucinate), ("eps_flip", r.flip)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "{name} × tier {} multiplier = {v} is outside [0, 1]",
                        t + 1
                    )));
                }
            }
            out[t] = r;
        }
        Ok(out)
    }
}

/// Wraps another extractor and corrupts its output at configured rates.
///
/// Randomness for each (note, question) pair comes from its own stream
/// derived from the seed, the note id and the question id, and every pair
/// consumes the same draws regardless of which corruptions fire. Raising a
/// rate therefore only ever adds corruptions to a fixed seed.
#[derive(Debug, Clone)]
pub struct NoisyExtractor<E> {
    base: E,
    config: NoiseConfig,
    rates: [Rates; 3],
    stats: NumericStats,
    seed: u64,
}

impl<E: Extractor> NoisyExtractor<E> {
    /// `stats` supplies the scale of numeric jitter and the distribution of
    /// hallucinated numeric answers.
    pub fn new(base: E, config: NoiseConfig, stats: NumericStats, seed: u64) -> Result<Self> {
        let rates = config.rates()?;
        Ok(Self { base, config, rates, stats, seed })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn base(&self) -> &E {
        &self.base
    }
}

/// Noisy oracle over the gold annotations of `corpus`.
pub fn make_noisy(
    corpus: &LabeledCorpus,
    catalog: &QuestionCatalog,
    config: NoiseConfig,
    seed: u64,
) -> Result<NoisyExtractor<OracleExtractor>> {
    let stats = NumericStats::fit(&corpus.notes, catalog)?;
    NoisyExtractor::new(make_oracle(corpus), config, stats, seed)
}

impl<E: Extractor> Extractor for NoisyExtractor<E> {
    fn extract(&self, note: NoteRef<'_>, catalog: &QuestionCatalog) -> Result<Vec<ExtractionResult>> {
        let mut results = self.base.extract(note, catalog)?;
        let n_tokens = tokenize(note.text).len();
        for (question, result) in catalog.questions().iter().zip(results.iter_mut()) {
            let rates = self.rates[question.tier.index()];
            let mut rng = rng_at(self.seed, &["noise", note.id, &question.id]);
            let u_miss: f64 = rng.random();
            let u_hallucinate: f64 = rng.random();
            let u_flip: f64 = rng.random();
            let coin: bool = rng.random();
            let z_jitter: f64 = rng.sample(StandardNormal);
            let z_value: f64 = rng.sample(StandardNormal);
            let span_len = rng.random_range(1..=3usize).min(n_tokens.max(1));
            let span_start = rng.random_range(0..=n_tokens.saturating_sub(span_len));
            let (mean, std) = self.stats.get(&question.id).unwrap_or((0.0, 1.0));

            if result.answered() {
                if u_miss < rates.miss {
                    *result = ExtractionResult::unanswered(&question.id, 0.0);
                    continue;
                }
                if let Some(p) = result.binary_prob.as_mut() {
                    if u_flip < rates.flip {
                        *p = 1.0 - *p;
                    }
                }
                if let Some(v) = result.numeric_value.as_mut() {
                    *v += z_jitter * rates.jitter * std;
                }
            } else if u_hallucinate < rates.hallucinate && n_tokens > 0 {
                *result = ExtractionResult {
                    question_id: question.id.clone(),
                    answerable_prob: 1.0,
                    span: TokenSpan { start: span_start + 1, end: span_start + span_len + 1 },
                    binary_prob: None,
                    numeric_value: None,
                };
                match question.answer_kind {
                    AnswerKind::Binary => result.binary_prob = Some(if coin { 1.0 } else { 0.0 }),
                    AnswerKind::Numeric => result.numeric_value = Some(mean + z_value * std),
                }
            }
        }
        Ok(results)
    }

    fn threshold(&self) -> f64 {
        self.base.threshold()
    }

    fn tokenizer_version(&self) -> &str {
        self.base.tokenizer_version()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_catalog, generate_corpus, CatalogConfig, CatalogDocument, GenerateConfig, Tier};
    use crate::extractor::{evaluate_extractor, extract_corpus};

    fn fixture(n: usize) -> (CatalogDocument, LabeledCorpus) {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: n, ..GenerateConfig::default() }, 21).unwrap();
        (doc, corpus)
    }

    #[test]
    fn zero_noise_is_the_oracle() {
        let (doc, corpus) = fixture(20);
        let noisy = make_noisy(&corpus, &doc.catalog, NoiseConfig::default(), 3).unwrap();
        let oracle = make_oracle(&corpus);
        assert_eq!(
            extract_corpus(&noisy, &corpus, &doc.catalog).unwrap(),
            extract_corpus(&oracle, &corpus, &doc.catalog).unwrap()
        );
    }

    #[test]
    fn full_flip_inverts_every_answered_binary() {
        let (doc, corpus) = fixture(20);
        let config = NoiseConfig { eps_flip: 1.0, ..NoiseConfig::default() };
        let noisy = make_noisy(&corpus, &doc.catalog, config, 3).unwrap();
        let results = extract_corpus(&noisy, &corpus, &doc.catalog).unwrap();
        for (note, rs) in corpus.notes.iter().zip(&results) {
            for (gold, r) in note.annotations.iter().zip(rs) {
                if let Some(b) = gold.binary_answer {
                    assert_eq!(r.binary_prob, Some(1.0 - f64::from(b)));
                }
            }
        }
    }

    #[test]
    fn full_miss_answers_nothing() {
        let (doc, corpus) = fixture(10);
        let config = NoiseConfig { eps_miss: 1.0, ..NoiseConfig::default() };
        let noisy = make_noisy(&corpus, &doc.catalog, config, 3).unwrap();
        let results = extract_corpus(&noisy, &corpus, &doc.catalog).unwrap();
        assert!(results.iter().flatten().all(|r| !r.answered()));
    }

    #[test]
    fn tier_multipliers_target_their_tier() {
        let (doc, corpus) = fixture(20);
        let config = NoiseConfig { eps_miss: 1.0, tier_multipliers: [0.0, 0.0, 1.0], ..NoiseConfig::default() };
        let noisy = make_noisy(&corpus, &doc.catalog, config, 3).unwrap();
        let results = extract_corpus(&noisy, &corpus, &doc.catalog).unwrap();
        for (note, rs) in corpus.notes.iter().zip(&results) {
            for ((q, gold), r) in doc.catalog.questions().iter().zip(&note.annotations).zip(rs) {
                let expected = gold.answered && q.tier != Tier::Three;
                assert_eq!(r.answered(), expected, "{} in {}", q.id, note.id);
            }
        }
    }

    #[test]
    fn flip_frequency_matches_rate() {
        let (doc, corpus) = fixture(400);
        let eps = 0.2;
        let noisy =
            make_noisy(&corpus, &doc.catalog, NoiseConfig { eps_flip: eps, ..NoiseConfig::default() }, 9).unwrap();
        let results = extract_corpus(&noisy, &corpus, &doc.catalog).unwrap();
        let (mut flipped, mut total) = (0usize, 0usize);
        for (note, rs) in corpus.notes.iter().zip(&results) {
            for (gold, r) in note.annotations.iter().zip(rs) {
                if let Some(b) = gold.binary_answer {
                    total += 1;
                    flipped += (r.binary_prob != Some(f64::from(b))) as usize;
                }
            }
        }
        assert!(total > 4000);
        assert!((flipped as f64 / total as f64 - eps).abs() <= 0.03);
    }

    #[test]
    fn impossible_mcc_degrades_with_misses() {
        let (doc, corpus) = fixture(60);
        let mut last = f64::INFINITY;
        for eps in [0.0, 0.1, 0.3, 0.6, 0.9] {
            let noisy =
                make_noisy(&corpus, &doc.catalog, NoiseConfig { eps_miss: eps, ..NoiseConfig::default() }, 4).unwrap();
            let mcc = evaluate_extractor(&noisy, &corpus, &doc.catalog).unwrap().impossible_mcc;
            assert!(mcc <= last, "eps {eps}: {mcc} > {last}");
            last = mcc;
        }
    }

    #[test]
    fn hallucinations_are_valid_results() {
        let (doc, corpus) = fixture(10);
        let config = NoiseConfig { eps_hallucinate: 1.0, ..NoiseConfig::default() };
        let noisy = make_noisy(&corpus, &doc.catalog, config, 3).unwrap();
        for note in &corpus.notes {
            let n = tokenize(&note.text).len();
            let rs = noisy.extract(note.as_ref(), &doc.catalog).unwrap();
            for (q, r) in doc.catalog.questions().iter().zip(&rs) {
                assert!(r.answered());
                r.validate(q.answer_kind, n, noisy.threshold()).unwrap();
            }
        }
    }

    #[test]
    fn excessive_rates_rejected() {
        let (doc, corpus) = fixture(2);
        let config = NoiseConfig { eps_flip: 0.4, tier_multipliers: [1.0, 3.0, 3.0], ..NoiseConfig::default() };
        assert!(matches!(make_noisy(&corpus, &doc.catalog, config, 0), Err(Error::InvalidConfig(_))));
    }
}
