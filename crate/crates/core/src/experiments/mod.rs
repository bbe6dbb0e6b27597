//! The semi-self-supervised loop and the studies built on it.
//!
//! Gold notes always contribute their hand-annotated features; unlabeled
//! pool notes contribute features imputed by an extractor. Test notes are
//! encoded from gold annotations in [`run_pipeline`] and the augmentation
//! study, so the metrics measure the classifier rather than compounding
//! extraction error; [`run_tier_evaluation`] instead imputes both sides to
//! compare extractors.

mod augment;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::classifier::{train_logreg, LogRegModel, TrainConfig};
use crate::corpus::{LabeledCorpus, LabeledNote, QuestionCatalog, Tier};
use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::extractor::{
    extract_corpus, make_oracle, train_lexicon_extractor, Extractor, LexiconConfig, NoiseConfig, NoisyExtractor,
};
use crate::features::{encode_extracted, encode_gold, FeatureMatrix, NumericStats};
use crate::metrics::{class_report, multiclass_mcc, ClassReport, ConfusionMatrix};

pub use augment::{run_augmentation, AugmentationConfig, CurvePoint, ExperimentCurves, TierCurve};

/// Which extractor to build for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorSpec {
    Oracle,
    Noisy {
        noise: NoiseConfig,
    },
    Lexicon {
        #[serde(default)]
        lexicon: LexiconConfig,
    },
    /// A trained lexicon extractor with corrupted output.
    NoisyLexicon {
        #[serde(default)]
        lexicon: LexiconConfig,
        noise: NoiseConfig,
    },
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec::Lexicon { lexicon: LexiconConfig::default() }
    }
}

impl ExtractorSpec {
    /// Builds the extractor. Trainable kinds learn from `train` only; oracle
    /// kinds replay the gold annotations of `targets`, the corpora they will
    /// be asked about. Noise streams derive from `seed`.
    pub fn build(
        &self,
        train: &LabeledCorpus,
        targets: &[&LabeledCorpus],
        catalog: &QuestionCatalog,
        seed: u64,
    ) -> Result<Box<dyn Extractor>> {
        let oracle = || -> Result<_> {
            let mut o = make_oracle(train);
            for t in targets {
                o.extend(t)?;
            }
            Ok(o)
        };
        let noise_seed = derive_seed(seed, &["extractor-noise"]);
        Ok(match self {
            ExtractorSpec::Oracle => Box::new(oracle()?),
            ExtractorSpec::Noisy { noise } => {
                let stats = NumericStats::fit(&train.notes, catalog)?;
                Box::new(NoisyExtractor::new(oracle()?, *noise, stats, noise_seed)?)
            }
            ExtractorSpec::Lexicon { lexicon } => Box::new(train_lexicon_extractor(train, catalog, lexicon)?.0),
            ExtractorSpec::NoisyLexicon { lexicon, noise } => {
                let stats = NumericStats::fit(&train.notes, catalog)?;
                let base = train_lexicon_extractor(train, catalog, lexicon)?.0;
                Box::new(NoisyExtractor::new(base, *noise, stats, noise_seed)?)
            }
        })
    }
}

/// Sorted union of the ICD labels in `corpora`.
pub fn class_list(corpora: &[&[LabeledNote]]) -> Vec<String> {
    let set: BTreeSet<&str> = corpora.iter().flat_map(|c| c.iter().map(|n| n.icd_code.as_str())).collect();
    set.into_iter().map(String::from).collect()
}

pub fn evaluate_classifier(model: &LogRegModel, x: &FeatureMatrix, classes: &[String]) -> Result<ClassReport> {
    class_report(x.labels(), &model.predict(x)?, classes)
}

/// Accuracy and K-class MCC of `model` on `x`.
pub fn accuracy_and_mcc(model: &LogRegModel, x: &FeatureMatrix, classes: &[String]) -> Result<(f64, f64)> {
    let cm = ConfusionMatrix::from_labels(x.labels(), &model.predict(x)?, classes)?;
    Ok((cm.accuracy()?, multiclass_mcc(&cm)?))
}

fn check_catalog(catalog: &QuestionCatalog, corpora: &[&LabeledCorpus]) -> Result<()> {
    corpora.iter().try_for_each(|c| c.check_catalog(catalog))
}

/// Imputes features for `corpus` with `extractor`.
pub fn impute(
    extractor: &dyn Extractor,
    corpus: &LabeledCorpus,
    catalog: &QuestionCatalog,
    stats: &NumericStats,
) -> Result<FeatureMatrix> {
    let results = extract_corpus(extractor, corpus, catalog)?;
    encode_extracted(&corpus.notes, &results, catalog, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub extractor: ExtractorSpec,
    pub tier: Tier,
    pub classifier: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { extractor: ExtractorSpec::default(), tier: Tier::Three, classifier: TrainConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub model: LogRegModel,
    pub report: ClassReport,
}

/// Trains the extractor on `train`, imputes `pool`, trains the classifier on
/// gold(`train`) ∪ imputed(`pool`) and evaluates on gold(`test`).
///
/// The pool's own annotations are only visible to oracle extractors.
pub fn run_pipeline(
    catalog: &QuestionCatalog,
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    pool: &LabeledCorpus,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    check_catalog(catalog, &[train, test, pool])?;
    let stats = NumericStats::fit(&train.notes, catalog)?;
    let mut x = encode_gold(&train.notes, catalog, &stats)?;
    if !pool.is_empty() {
        let extractor = config.extractor.build(train, &[pool], catalog, config.seed)?;
        x = x.vstack(&impute(extractor.as_ref(), pool, catalog, &stats)?)?;
    }
    let x = x.tier_view(config.tier);
    let model = train_logreg(&x, &config.classifier)?;
    let test_x = encode_gold(&test.notes, catalog, &stats)?.tier_view(config.tier);
    let classes = class_list(&[&train.notes, &pool.notes, &test.notes]);
    let report = evaluate_classifier(&model, &test_x, &classes)?;
    Ok(PipelineOutcome { model, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierEvalConfig {
    pub tier: Tier,
    pub classifier: TrainConfig,
    pub seed: u64,
}

impl Default for TierEvalConfig {
    fn default() -> Self {
        Self { tier: Tier::Three, classifier: TrainConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierEvaluation {
    pub extractor: String,
    pub report: ClassReport,
}

/// For each named extractor: impute training and evaluation notes, train on
/// the former, report on the latter.
pub fn run_tier_evaluation(
    catalog: &QuestionCatalog,
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    extractors: &[(String, ExtractorSpec)],
    config: &TierEvalConfig,
) -> Result<Vec<TierEvaluation>> {
    if extractors.is_empty() {
        return Err(Error::Empty("extractor list"));
    }
    check_catalog(catalog, &[train, test])?;
    let stats = NumericStats::fit(&train.notes, catalog)?;
    let classes = class_list(&[&train.notes, &test.notes]);
    extractors
        .iter()
        .map(|(name, spec)| {
            let extractor = spec.build(train, &[test], catalog, derive_seed(config.seed, &["tier-eval", name]))?;
            let train_x = impute(extractor.as_ref(), train, catalog, &stats)?.tier_view(config.tier);
            let test_x = impute(extractor.as_ref(), test, catalog, &stats)?.tier_view(config.tier);
            let model = train_logreg(&train_x, &config.classifier)?;
            Ok(TierEvaluation { extractor: name.clone(), report: evaluate_classifier(&model, &test_x, &classes)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        default_catalog, generate_corpus, stratified_split, CatalogConfig, GenerateConfig, SplitRatios,
    };

    fn corpora() -> (crate::corpus::CatalogDocument, LabeledCorpus, LabeledCorpus, LabeledCorpus) {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let gold = generate_corpus(&doc, &GenerateConfig { n_notes: 120, ..GenerateConfig::default() }, 1).unwrap();
        let pool_cfg = GenerateConfig { n_notes: 60, id_prefix: "pool".into(), ..GenerateConfig::default() };
        let pool = generate_corpus(&doc, &pool_cfg, 2).unwrap();
        let split = stratified_split(&gold, SplitRatios { train: 0.7, validation: 0.0, test: 0.3 }, 3).unwrap();
        (doc, split.train, split.test, pool)
    }

    #[test]
    fn empty_pool_is_the_gold_only_classifier() {
        let (doc, train, test, pool) = corpora();
        let config = PipelineConfig { tier: Tier::Two, ..PipelineConfig::default() };
        let out = run_pipeline(&doc.catalog, &train, &test, &pool.with_notes(Vec::new()), &config).unwrap();
        let stats = NumericStats::fit(&train.notes, &doc.catalog).unwrap();
        let x = encode_gold(&train.notes, &doc.catalog, &stats).unwrap().tier_view(Tier::Two);
        assert_eq!(out.model, train_logreg(&x, &config.classifier).unwrap());
    }

    #[test]
    fn oracle_pipeline_equals_training_on_gold_union() {
        let (doc, train, test, pool) = corpora();
        let config = PipelineConfig { extractor: ExtractorSpec::Oracle, ..PipelineConfig::default() };
        let out = run_pipeline(&doc.catalog, &train, &test, &pool, &config).unwrap();
        let stats = NumericStats::fit(&train.notes, &doc.catalog).unwrap();
        let union: Vec<LabeledNote> = train.notes.iter().chain(&pool.notes).cloned().collect();
        let model = train_logreg(&encode_gold(&union, &doc.catalog, &stats).unwrap(), &config.classifier).unwrap();
        let test_x = encode_gold(&test.notes, &doc.catalog, &stats).unwrap();
        let classes = class_list(&[&union, &test.notes]);
        assert_eq!(out.model, model);
        assert_eq!(out.report, evaluate_classifier(&model, &test_x, &classes).unwrap());
    }

    #[test]
    fn tier_one_noise_free_matches_oracle_at_tier_one() {
        let (doc, train, test, pool) = corpora();
        let noise =
            NoiseConfig { eps_miss: 0.3, eps_flip: 0.3, tier_multipliers: [0.0, 1.0, 1.0], ..NoiseConfig::default() };
        let oracle = PipelineConfig { extractor: ExtractorSpec::Oracle, tier: Tier::One, ..PipelineConfig::default() };
        let noisy = PipelineConfig { extractor: ExtractorSpec::Noisy { noise }, ..oracle.clone() };
        let a = run_pipeline(&doc.catalog, &train, &test, &pool, &oracle).unwrap();
        let b = run_pipeline(&doc.catalog, &train, &test, &pool, &noisy).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn tier_evaluation_report_shape() {
        let (doc, train, test, _) = corpora();
        let out = run_tier_evaluation(
            &doc.catalog,
            &train,
            &test,
            &[("oracle".into(), ExtractorSpec::Oracle)],
            &TierEvalConfig::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].report.rows.len(), 6);
        assert_eq!(out[0].report.to_csv().unwrap().lines().count(), 1 + 6 + 1);
    }

    #[test]
    fn catalog_mismatch_rejected() {
        let (doc, train, test, mut pool) = corpora();
        pool.catalog_digest = "different".into();
        let err = run_pipeline(&doc.catalog, &train, &test, &pool, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::CatalogMismatch { .. }));
    }
}
