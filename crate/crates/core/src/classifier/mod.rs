//! L1-regularized multinomial logistic regression and linear SHAP.
//!
//! The objective is the unnormalized sum of softmax cross-entropies plus
//! `(1/C) · Σ|W|`; intercepts are not penalized. With this scaling `C` keeps
//! the meaning it has in common machine-learning toolkits.

mod shap;
mod solver;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use shap::{importance_summary, linear_shap, write_importance_csv, FeatureImportance, ShapExplanation};
pub use solver::{minimize, Params, Problem, SolverOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Relative objective change that ends training.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Recorded for provenance; training starts from zero and is
    /// deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { c: 0.2, tolerance: 1e-7, max_iterations: 20_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub classes: Vec<String>,
    pub features: Vec<String>,
    /// `K × F`, one row per class.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// Column means of the training rows; the SHAP background.
    pub background: Vec<f64>,
    pub metadata: TrainMetadata,
}

fn validate_config(config: &TrainConfig) -> Result<()> {
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(Error::InvalidConfig(format!("C must be positive, got {}", config.c)));
    }
    if !(config.tolerance.is_finite() && config.tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", config.tolerance)));
    }
    Ok(())
}

/// Classes in sorted order and each row's class index.
fn encode_targets(labels: &[String]) -> Result<(Vec<String>, Vec<usize>)> {
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    match classes.len() {
        0 => return Err(Error::Empty("training labels")),
        1 => return Err(Error::SingleClass(classes[0].clone())),
        _ => {}
    }
    let targets = labels.iter().map(|l| classes.binary_search(l).expect("label collected above")).collect();
    Ok((classes, targets))
}

/// Trains on the rows and labels of `x`; also returns the objective trace.
pub fn train_logreg_traced(x: &FeatureMatrix, config: &TrainConfig) -> Result<(LogRegModel, Vec<f64>)> {
    validate_config(config)?;
    let (classes, targets) = encode_targets(x.labels())?;
    let problem = Problem::new(x, targets, classes.len())?;
    let out = minimize(&problem, 1.0 / config.c, config.tolerance, config.max_iterations);
    let f = x.n_cols();
    let n = x.n_rows() as f64;
    let mut background = vec![0.0; f];
    for i in 0..x.n_rows() {
        for (b, v) in background.iter_mut().zip(x.row(i)) {
            *b += v;
        }
    }
    background.iter_mut().for_each(|b| *b /= n);
    let model = LogRegModel {
        features: x.column_names(),
        weights: out.params.weights.chunks(f.max(1)).take(classes.len()).map(<[f64]>::to_vec).collect(),
        intercepts: out.params.intercepts,
        background,
        metadata: TrainMetadata {
            c: config.c,
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
            seed: config.seed,
            iterations: out.iterations,
            converged: out.converged,
            final_objective: *out.trace.last().expect("trace starts with the initial objective"),
        },
        classes,
    };
    Ok((model, out.trace))
}

pub fn train_logreg(x: &FeatureMatrix, config: &TrainConfig) -> Result<LogRegModel> {
    train_logreg_traced(x, config).map(|(m, _)| m)
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), found: x.n_cols() });
        }
        Ok(())
    }

    /// `W x + b` for one row.
    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_width(x)?;
        Ok((0..x.n_rows()).map(|i| softmax(&self.logits(x.row(i)))).collect())
    }

    /// Most probable class per row; ties go to the earlier class.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<String>> {
        self.check_width(x)?;
        Ok((0..x.n_rows())
            .map(|i| {
                let z = self.logits(x.row(i));
                let best = (1..z.len()).fold(0, |b, c| if z[c] > z[b] { c } else { b });
                self.classes[best].clone()
            })
            .collect())
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().flatten().filter(|w| **w != 0.0).count()
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        let k = model.classes.len();
        let f = model.features.len();
        if model.weights.len() != k || model.intercepts.len() != k || model.background.len() != f {
            return Err(Error::DimensionMismatch { expected: k, found: model.weights.len() });
        }
        if let Some(row) = model.weights.iter().find(|r| r.len() != f) {
            return Err(Error::DimensionMismatch { expected: f, found: row.len() });
        }
        Ok(model)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = solver::log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}
