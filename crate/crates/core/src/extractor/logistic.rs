//! Low-dimensional ridge logistic regression for extractor calibration.

use serde::{Deserialize, Serialize};

/// `sigmoid(bias + Σ w_i x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }

    /// Constant model at the (smoothed) base rate.
    pub fn constant(dim: usize, positives: usize, total: usize) -> Self {
        let p = (positives as f64 + 0.5) / (total as f64 + 1.0);
        Self { weights: vec![0.0; dim], bias: (p / (1.0 - p)).ln() }
    }

    /// Newton–Raphson on the ridge-penalized log-likelihood; the bias is not
    /// penalized. The penalty keeps separable data finite.
    pub fn fit(xs: &[Vec<f64>], ys: &[bool], ridge: f64) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let positives = ys.iter().filter(|y| **y).count();
        if positives == 0 || positives == ys.len() {
            return Self::constant(dim, positives, ys.len());
        }
        let n = dim + 1;
        let mut theta = vec![0.0; n];
        theta[dim] = Self::constant(dim, positives, ys.len()).bias;
        for _ in 0..100 {
            let mut grad = vec![0.0; n];
            let mut hess = vec![vec![0.0; n]; n];
            for (x, &y) in xs.iter().zip(ys) {
                let z = theta[dim] + x.iter().zip(&theta).map(|(v, w)| v * w).sum::<f64>();
                let p = sigmoid(z);
                let r = p - f64::from(u8::from(y));
                let w = (p * (1.0 - p)).max(1e-12);
                for a in 0..n {
                    let xa = if a == dim { 1.0 } else { x[a] };
                    grad[a] += r * xa;
                    for b in 0..n {
                        let xb = if b == dim { 1.0 } else { x[b] };
                        hess[a][b] += w * xa * xb;
                    }
                }
            }
            for a in 0..dim {
                grad[a] += ridge * theta[a];
                hess[a][a] += ridge;
            }
            hess[dim][dim] += 1e-9;
            let Some(step) = solve(hess, grad) else { break };
            let mut change = 0.0f64;
            for (t, s) in theta.iter_mut().zip(&step) {
                *t -= s;
                change = change.max(s.abs());
            }
            if change < 1e-10 {
                break;
            }
        }
        let bias = theta.pop().expect("bias present");
        Self { weights: theta, bias }
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (above, below) = a.split_at_mut(row);
            for (dst, src) in below[0][col..].iter_mut().zip(&above[col][col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
