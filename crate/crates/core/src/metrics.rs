//! Evaluation mathematics: token-span F1, binary and K-class Matthews
//! correlation, one-vs-rest class reports and normal-approximation confidence
//! intervals.
//!
//! Every MCC with a zero in its denominator is reported as 0.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::TokenSpan;
use crate::error::{Error, Result};

/// Token-overlap F1 between a predicted and a gold span.
///
/// Both absent scores 1, exactly one absent scores 0.
pub fn token_span_f1(pred: Option<TokenSpan>, gold: Option<TokenSpan>) -> Result<f64> {
    for span in [pred, gold].into_iter().flatten() {
        if span.start >= span.end {
            return Err(Error::InvalidSpan { start: span.start, end: span.end });
        }
    }
    match (pred, gold) {
        (None, None) => Ok(1.0),
        (None, Some(_)) | (Some(_), None) => Ok(0.0),
        (Some(p), Some(g)) => {
            let overlap = p.end.min(g.end).saturating_sub(p.start.max(g.start));
            if overlap == 0 {
                return Ok(0.0);
            }
            let precision = overlap as f64 / p.len() as f64;
            let recall = overlap as f64 / g.len() as f64;
            Ok(2.0 * precision * recall / (precision + recall))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn mcc(&self) -> Result<f64> {
        binary_mcc(self.tp, self.tn, self.fp, self.fn_)
    }
}

pub fn binary_mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> Result<f64> {
    if tp + tn + fp + fn_ == 0 {
        return Err(Error::Empty("confusion counts"));
    }
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / denom.sqrt())
}

/// K×K counts; rows are gold classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self { classes, counts: vec![vec![0; k]; k] }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: counts.len() });
        }
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: row.len() });
        }
        Ok(Self { classes, counts })
    }

    pub fn from_labels<S: AsRef<str>>(y_true: &[S], y_pred: &[S], classes: &[String]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::DimensionMismatch { expected: y_true.len(), found: y_pred.len() });
        }
        let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let lookup = |label: &str| index.get(label).copied().ok_or_else(|| Error::UnknownLabel(label.to_string()));
        let mut cm = Self::new(classes.to_vec());
        for (t, p) in y_true.iter().zip(y_pred) {
            let (t, p) = (lookup(t.as_ref())?, lookup(p.as_ref())?);
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        let correct: u64 = (0..self.classes.len()).map(|k| self.counts[k][k]).sum();
        Ok(correct as f64 / total as f64)
    }

    /// One-vs-rest counts for class `k`.
    pub fn one_vs_rest(&self, k: usize) -> BinaryCounts {
        let total = self.total();
        let tp = self.counts[k][k];
        let gold: u64 = self.counts[k].iter().sum();
        let predicted: u64 = self.counts.iter().map(|row| row[k]).sum();
        let fn_ = gold - tp;
        let fp = predicted - tp;
        BinaryCounts { tp, fp, fn_, tn: total - tp - fp - fn_ }
    }
}

/// K-category correlation coefficient in covariance form:
/// `(c·s − Σ p_k t_k) / sqrt((s² − Σ p_k²)(s² − Σ t_k²))`, with `c` the
/// trace, `s` the total, `t_k` gold and `p_k` predicted class totals.
pub fn multiclass_mcc(cm: &ConfusionMatrix) -> Result<f64> {
    let k = cm.classes.len();
    let s = cm.total() as f64;
    if s == 0.0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let c: f64 = (0..k).map(|i| cm.counts[i][i] as f64).sum();
    let t: Vec<f64> = (0..k).map(|i| cm.counts[i].iter().sum::<u64>() as f64).collect();
    let p: Vec<f64> = (0..k).map(|j| cm.counts.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|x| x * x).sum();
    let tt: f64 = t.iter().map(|x| x * x).sum();
    let denom = (s * s - pp) * (s * s - tt);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((c * s - pt) / denom.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub f1: f64,
    pub mcc: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverage {
    pub f1: f64,
    pub mcc: f64,
    pub tpr: f64,
    pub tnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub rows: Vec<ClassRow>,
    pub weighted: WeightedAverage,
    pub accuracy: f64,
    pub mcc: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_report<S: AsRef<str>>(y_true: &[S], y_pred: &[S], classes: &[String]) -> Result<ClassReport> {
    if y_true.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    let cm = ConfusionMatrix::from_labels(y_true, y_pred, classes)?;
    let rows: Vec<ClassRow> = (0..classes.len())
        .map(|k| {
            let b = cm.one_vs_rest(k);
            let f1 = ratio(2 * b.tp, 2 * b.tp + b.fp + b.fn_);
            ClassRow {
                class: classes[k].clone(),
                f1,
                mcc: b.mcc().expect("non-empty matrix"),
                tpr: ratio(b.tp, b.tp + b.fn_),
                tnr: ratio(b.tn, b.tn + b.fp),
                support: b.tp + b.fn_,
            }
        })
        .collect();
    let total = cm.total() as f64;
    let avg = |f: fn(&ClassRow) -> f64| rows.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total;
    let weighted = WeightedAverage { f1: avg(|r| r.f1), mcc: avg(|r| r.mcc), tpr: avg(|r| r.tpr), tnr: avg(|r| r.tnr) };
    Ok(ClassReport { accuracy: cm.accuracy()?, mcc: multiclass_mcc(&cm)?, rows, weighted })
}

impl ClassReport {
    /// CSV with columns `class,f1,mcc,tpr,tnr,support`; the last row holds the
    /// support-weighted averages.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "f1", "mcc", "tpr", "tnr", "support"])?;
        for r in &self.rows {
            w.write_record([
                r.class.clone(),
                r.f1.to_string(),
                r.mcc.to_string(),
                r.tpr.to_string(),
                r.tnr.to_string(),
                r.support.to_string(),
            ])?;
        }
        let support: u64 = self.rows.iter().map(|r| r.support).sum();
        let a = &self.weighted;
        w.write_record([
            "weighted_average".to_string(),
            a.f1.to_string(),
            a.mcc.to_string(),
            a.tpr.to_string(),
            a.tnr.to_string(),
            support.to_string(),
        ])?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Mean and normal-approximation half width `z · sd / √n` (sample sd).
pub fn mean_ci(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Empty("confidence interval needs at least two samples"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level {level} outside (0, 1)")));
    }
    if samples.iter().all(|x| *x == samples[0]) {
        return Ok((samples[0], 0.0));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok((mean, z * var.sqrt() / n.sqrt()))
}
