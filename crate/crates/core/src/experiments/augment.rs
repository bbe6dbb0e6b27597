//! Cross-validated augmentation study: how classifier quality moves as
//! machine-labeled notes are added to a fixed hand-annotated training set.

use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy_and_mcc, class_list, impute, ExtractorSpec};
use crate::classifier::{train_logreg, TrainConfig};
use crate::corpus::{stratified_kfold, LabeledCorpus, QuestionCatalog, Tier};
use crate::digest::{derive_seed, json_digest, rng_at};
use crate::error::{Error, Result};
use crate::extractor::Extractor;
use crate::features::{encode_gold, FeatureMatrix, NumericStats};
use crate::metrics::mean_ci;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub folds: usize,
    /// Numbers of pool notes added; sorted, starting at 0.
    pub steps: Vec<usize>,
    pub repeats: usize,
    pub tiers: Vec<Tier>,
    pub extractor: ExtractorSpec,
    pub classifier: TrainConfig,
    pub confidence: f64,
    pub seed: u64,
    /// Encode held-out notes from extractor output instead of their gold
    /// annotations.
    pub impute_test: bool,
    /// Retrain the extractor inside every fold. When off, one extractor is
    /// trained on the whole gold corpus, held-out folds included.
    pub extractor_per_fold: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            steps: (0..=10).map(|i| i * 75).collect(),
            repeats: 20,
            tiers: Tier::ALL.to_vec(),
            extractor: ExtractorSpec::default(),
            classifier: TrainConfig::default(),
            confidence: 0.95,
            seed: 0,
            impute_test: false,
            extractor_per_fold: true,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.folds < 2 {
            return bad("at least two folds required".into());
        }
        if self.repeats < 2 {
            return bad("at least two repeats required for a confidence interval".into());
        }
        if self.steps.first() != Some(&0) || self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("steps must start at 0 and increase strictly".into());
        }
        if let Some(&last) = self.steps.last().filter(|&&s| s > pool_size) {
            return bad(format!("step {last} exceeds the pool of {pool_size} notes"));
        }
        let mut tiers = self.tiers.clone();
        tiers.dedup();
        if self.tiers.is_empty() || tiers.len() != self.tiers.len() || self.tiers.windows(2).any(|w| w[0] >= w[1]) {
            return bad("tiers must be non-empty, sorted and distinct".into());
        }
        if !(0.0 < self.confidence && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub accuracy: f64,
    pub accuracy_ci: f64,
    pub mcc: f64,
    pub mcc_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierCurve {
    pub tier: Tier,
    /// Hand-annotated only (step 0).
    pub baseline_accuracy: f64,
    pub baseline_mcc: f64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCurves {
    pub curves: Vec<TierCurve>,
    pub config_digest: String,
    pub seed: u64,
    pub gold_digest: String,
    pub pool_digest: String,
}

impl ExperimentCurves {
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    pub fn curve(&self, tier: Tier) -> Option<&TierCurve> {
        self.curves.iter().find(|c| c.tier == tier)
    }

    /// Columns `tier,step,metric,mean,ci_half_width,baseline`, one row per
    /// (tier, step, metric).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tier", "step", "metric", "mean", "ci_half_width", "baseline"])?;
        for c in &self.curves {
            for p in &c.points {
                for (metric, mean, ci, base) in [
                    ("accuracy", p.accuracy, p.accuracy_ci, c.baseline_accuracy),
                    ("mcc", p.mcc, p.mcc_ci, c.baseline_mcc),
                ] {
                    w.write_record([
                        c.tier.to_string(),
                        p.step.to_string(),
                        metric.to_string(),
                        mean.to_string(),
                        ci.to_string(),
                        base.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-fold inputs shared by every cell of the grid.
struct Fold {
    /// Gold training rows and test rows, one matrix per tier.
    train: Vec<FeatureMatrix>,
    test: Vec<FeatureMatrix>,
    pool: Vec<FeatureMatrix>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    fold: usize,
    tier: usize,
    step: usize,
    repeat: usize,
}

/// Runs the grid on `jobs` worker threads. Results do not depend on `jobs`:
/// every cell draws from its own seed and aggregation follows a fixed order.
pub fn run_augmentation(
    catalog: &QuestionCatalog,
    gold: &LabeledCorpus,
    pool: &LabeledCorpus,
    config: &AugmentationConfig,
    jobs: usize,
) -> Result<ExperimentCurves> {
    config.validate(pool.len())?;
    gold.check_catalog(catalog)?;
    pool.check_catalog(catalog)?;
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let fold_of = stratified_kfold(&gold.notes, config.folds, derive_seed(config.seed, &["folds"]))?;
    let classes = class_list(&[&gold.notes, &pool.notes]);
    let shared = match config.extractor_per_fold {
        true => None,
        false => Some(config.extractor.build(gold, &[pool], catalog, derive_seed(config.seed, &["extractor"]))?),
    };

    let folds: Vec<Fold> = workers.install(|| {
        (0..config.folds)
            .into_par_iter()
            .map(|f| {
                let pick = |test: bool| {
                    gold.with_notes(
                        gold.notes
                            .iter()
                            .zip(&fold_of)
                            .filter(|(_, &k)| (k == f) == test)
                            .map(|(n, _)| n.clone())
                            .collect(),
                    )
                };
                let (train, test) = (pick(false), pick(true));
                let stats = NumericStats::fit(&train.notes, catalog)?;
                let own;
                let extractor: &dyn Extractor = match &shared {
                    Some(e) => e.as_ref(),
                    None => {
                        let seed = derive_seed(config.seed, &["fold", &f.to_string()]);
                        own = config.extractor.build(&train, &[pool, &test], catalog, seed)?;
                        own.as_ref()
                    }
                };
                let pool_x = impute(extractor, pool, catalog, &stats)?;
                let train_x = encode_gold(&train.notes, catalog, &stats)?;
                let test_x = match config.impute_test {
                    true => impute(extractor, &test, catalog, &stats)?,
                    false => encode_gold(&test.notes, catalog, &stats)?,
                };
                let view = |m: &FeatureMatrix| config.tiers.iter().map(|&t| m.tier_view(t)).collect();
                Ok(Fold { train: view(&train_x), test: view(&test_x), pool: view(&pool_x) })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // Steps without sampling freedom (none or all of the pool) run once.
    let deterministic = |step: usize| step == 0 || config.steps[step] == pool.len();
    let mut cells = Vec::new();
    for fold in 0..config.folds {
        for tier in 0..config.tiers.len() {
            for step in 0..config.steps.len() {
                let repeats = if deterministic(step) { 1 } else { config.repeats };
                cells.extend((0..repeats).map(|repeat| Cell { fold, tier, step, repeat }));
            }
        }
    }
    let scores: Vec<(f64, f64)> = workers.install(|| {
        cells
            .par_iter()
            .map(|c| {
                let fold = &folds[c.fold];
                let m = config.steps[c.step];
                let train = if m == 0 {
                    fold.train[c.tier].clone()
                } else {
                    let coords = [c.fold.to_string(), m.to_string(), c.repeat.to_string()];
                    let mut rng = rng_at(config.seed, &["subset", &coords[0], &coords[1], &coords[2]]);
                    let mut rows = sample(&mut rng, pool.len(), m).into_vec();
                    rows.sort_unstable();
                    fold.train[c.tier].vstack(&fold.pool[c.tier].select_rows(&rows))?
                };
                let model = train_logreg(&train, &config.classifier)?;
                accuracy_and_mcc(&model, &fold.test[c.tier], &classes)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // score lookup: (fold, tier, step, repeat) → value
    let mut table = vec![vec![vec![Vec::new(); config.steps.len()]; config.tiers.len()]; config.folds];
    for (c, s) in cells.iter().zip(scores) {
        table[c.fold][c.tier][c.step].push(s);
    }
    let k = config.folds as f64;
    let mut curves = Vec::new();
    for (ti, &tier) in config.tiers.iter().enumerate() {
        let mut points = Vec::new();
        for (si, &step) in config.steps.iter().enumerate() {
            let (mut acc, mut mcc) = (Vec::new(), Vec::new());
            for r in 0..config.repeats {
                let at = |f: usize| table[f][ti][si][if deterministic(si) { 0 } else { r }];
                acc.push((0..config.folds).map(|f| at(f).0).sum::<f64>() / k);
                mcc.push((0..config.folds).map(|f| at(f).1).sum::<f64>() / k);
            }
            let (accuracy, accuracy_ci) = mean_ci(&acc, config.confidence)?;
            let (mcc, mcc_ci) = mean_ci(&mcc, config.confidence)?;
            points.push(CurvePoint { step, accuracy, accuracy_ci, mcc, mcc_ci });
        }
        curves.push(TierCurve { tier, baseline_accuracy: points[0].accuracy, baseline_mcc: points[0].mcc, points });
    }
    Ok(ExperimentCurves {
        curves,
        config_digest: json_digest(config),
        seed: config.seed,
        gold_digest: gold.digest(),
        pool_digest: pool.digest(),
    })
}
