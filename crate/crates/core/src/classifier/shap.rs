//! Exact SHAP values for a linear model with independent features.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::LogRegModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Contribution of feature `j` to the logit of class `c` at row `x` is
/// `W[c][j] · (x_j − x̄_j)`; the base value of class `c` is `W_c · x̄ + b_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub classes: Vec<String>,
    pub features: Vec<String>,
    pub base_values: Vec<f64>,
    n_rows: usize,
    /// Row-major `[row][class][feature]`.
    values: Vec<f64>,
}

impl ShapExplanation {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn contribution(&self, row: usize, class: usize, feature: usize) -> f64 {
        let (k, f) = (self.classes.len(), self.features.len());
        self.values[(row * k + class) * f + feature]
    }

    pub fn row_class(&self, row: usize, class: usize) -> &[f64] {
        let (k, f) = (self.classes.len(), self.features.len());
        let at = (row * k + class) * f;
        &self.values[at..at + f]
    }
}

pub fn linear_shap(model: &LogRegModel, x: &FeatureMatrix) -> Result<ShapExplanation> {
    if x.n_cols() != model.n_features() {
        return Err(Error::DimensionMismatch { expected: model.n_features(), found: x.n_cols() });
    }
    if model.background.len() != model.n_features() {
        return Err(Error::DimensionMismatch { expected: model.n_features(), found: model.background.len() });
    }
    let base_values = model.logits(&model.background);
    let mut values = Vec::with_capacity(x.n_rows() * model.classes.len() * model.n_features());
    for i in 0..x.n_rows() {
        let row = x.row(i);
        for w in &model.weights {
            values.extend(w.iter().zip(row).zip(&model.background).map(|((w, v), m)| w * (v - m)));
        }
    }
    Ok(ShapExplanation {
        classes: model.classes.clone(),
        features: model.features.clone(),
        base_values,
        n_rows: x.n_rows(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean |contribution| per class, in class order.
    pub per_class: Vec<f64>,
    pub total: f64,
}

/// Features ranked by the sum over classes of mean |contribution|.
pub fn importance_summary(explanation: &ShapExplanation, top_n: usize) -> Result<Vec<FeatureImportance>> {
    if explanation.n_rows == 0 {
        return Err(Error::Empty("explanation"));
    }
    let (k, f) = (explanation.classes.len(), explanation.features.len());
    let n = explanation.n_rows as f64;
    let mut ranked: Vec<FeatureImportance> = (0..f)
        .map(|j| {
            let per_class: Vec<f64> = (0..k)
                .map(|c| (0..explanation.n_rows).map(|i| explanation.contribution(i, c, j).abs()).sum::<f64>() / n)
                .collect();
            FeatureImportance { feature: explanation.features[j].clone(), total: per_class.iter().sum(), per_class }
        })
        .collect();
    // stable: equal totals keep column order
    ranked.sort_by(|a, b| b.total.total_cmp(&a.total));
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Long-format CSV: `feature_id,class,mean_abs_contribution`.
pub fn write_importance_csv<W: Write>(rows: &[FeatureImportance], classes: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature_id", "class", "mean_abs_contribution"])?;
    for r in rows {
        for (class, v) in classes.iter().zip(&r.per_class) {
            w.write_record([r.feature.as_str(), class.as_str(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_logreg, TrainConfig};
    use rand::{Rng, SeedableRng};

    fn fitted(seed: u64) -> (LogRegModel, FeatureMatrix) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys = rows.iter().map(|r| if r[0] + 0.5 * r[1] > 0.0 { "p" } else { "q" }.to_string()).collect();
        let x = FeatureMatrix::from_rows(&rows, ys).unwrap();
        (train_logreg(&x, &TrainConfig { c: 2.0, ..TrainConfig::default() }).unwrap(), x)
    }

    #[test]
    fn contributions_add_up_to_logits() {
        let (m, x) = fitted(1);
        let e = linear_shap(&m, &x).unwrap();
        for i in 0..x.n_rows() {
            let z = m.logits(x.row(i));
            for c in 0..m.classes.len() {
                let total: f64 = e.row_class(i, c).iter().sum::<f64>() + e.base_values[c];
                assert!((total - z[c]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn background_row_explains_nothing() {
        let (m, _) = fitted(2);
        let x = FeatureMatrix::from_rows(&[m.background.clone()], vec!["p".into()]).unwrap();
        let e = linear_shap(&m, &x).unwrap();
        assert!((0..2).all(|c| e.row_class(0, c).iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn zeroed_weight_column_contributes_nothing() {
        let (mut m, x) = fitted(3);
        for w in &mut m.weights {
            w[0] = 0.0;
        }
        let e = linear_shap(&m, &x).unwrap();
        assert!((0..x.n_rows()).all(|i| (0..2).all(|c| e.contribution(i, c, 0) == 0.0)));
    }

    #[test]
    fn single_weight_ranks_first_and_truncates() {
        let (mut m, x) = fitted(4);
        for w in &mut m.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        m.weights[0][3] = 1.5;
        let e = linear_shap(&m, &x).unwrap();
        let ranked = importance_summary(&e, 3).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].feature, "x3");
        assert_eq!(importance_summary(&e, 50).unwrap().len(), 5);
    }

    #[test]
    fn csv_layout() {
        let (m, x) = fitted(5);
        let ranked = importance_summary(&linear_shap(&m, &x).unwrap(), 2).unwrap();
        let mut buf = Vec::new();
        write_importance_csv(&ranked, &m.classes, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("feature_id,class,mean_abs_contribution"));
        assert_eq!(text.lines().count(), 1 + 2 * 2);
    }
}
