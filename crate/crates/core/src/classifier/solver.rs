//! Penalized multinomial log-loss and its monotone accelerated proximal
//! gradient minimizer.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Rows stored sparsely; most encoded features are zero.
#[derive(Debug, Clone)]
pub struct Problem {
    n_rows: usize,
    n_features: usize,
    n_classes: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    targets: Vec<usize>,
}

/// Weights `K × F` row-major plus `K` intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl Params {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        Self { weights: vec![0.0; n_classes * n_features], intercepts: vec![0.0; n_classes] }
    }

    pub fn l1(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    fn dot(&self, other: &Params) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum::<f64>()
            + self.intercepts.iter().zip(&other.intercepts).map(|(a, b)| a * b).sum::<f64>()
    }

    fn sub(&self, other: &Params) -> Params {
        Params {
            weights: self.weights.iter().zip(&other.weights).map(|(a, b)| a - b).collect(),
            intercepts: self.intercepts.iter().zip(&other.intercepts).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + s · dir`.
    fn axpy(&self, s: f64, dir: &Params) -> Params {
        Params {
            weights: self.weights.iter().zip(&dir.weights).map(|(a, d)| a + s * d).collect(),
            intercepts: self.intercepts.iter().zip(&dir.intercepts).map(|(a, d)| a + s * d).collect(),
        }
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl Problem {
    /// `targets[i]` is the class index of row `i`.
    pub fn new(x: &FeatureMatrix, targets: Vec<usize>, n_classes: usize) -> Result<Self> {
        if targets.len() != x.n_rows() {
            return Err(Error::DimensionMismatch { expected: x.n_rows(), found: targets.len() });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= n_classes) {
            return Err(Error::DimensionMismatch { expected: n_classes, found: t + 1 });
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        let mut row_ptr = Vec::with_capacity(x.n_rows() + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        row_ptr.push(0);
        for i in 0..x.n_rows() {
            for (j, &v) in x.row(i).iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { n_rows: x.n_rows(), n_features: x.n_cols(), n_classes, row_ptr, cols, vals, targets })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn logits(&self, p: &Params, i: usize, z: &mut [f64]) {
        let f = self.n_features;
        z.copy_from_slice(&p.intercepts);
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            let (j, v) = (self.cols[k], self.vals[k]);
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += v * p.weights[c * f + j];
            }
        }
    }

    /// Σ_i cross-entropy of softmax(W x_i + b) against the target class.
    pub fn loss(&self, p: &Params) -> f64 {
        let mut z = vec![0.0; self.n_classes];
        let mut total = 0.0;
        for i in 0..self.n_rows {
            self.logits(p, i, &mut z);
            total += log_sum_exp(&z) - z[self.targets[i]];
        }
        total
    }

    /// Loss and its gradient.
    pub fn loss_and_gradient(&self, p: &Params) -> (f64, Params) {
        let (k, f) = (self.n_classes, self.n_features);
        let mut grad = Params::zeros(k, f);
        let mut z = vec![0.0; k];
        let mut total = 0.0;
        for i in 0..self.n_rows {
            self.logits(p, i, &mut z);
            let lse = log_sum_exp(&z);
            total += lse - z[self.targets[i]];
            for (c, zc) in z.iter_mut().enumerate() {
                *zc = (*zc - lse).exp() - f64::from(u8::from(c == self.targets[i]));
                grad.intercepts[c] += *zc;
            }
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (j, v) = (self.cols[idx], self.vals[idx]);
                for (c, r) in z.iter().enumerate() {
                    grad.weights[c * f + j] += v * r;
                }
            }
        }
        (total, grad)
    }

    /// Loss plus `penalty · Σ|W|`.
    pub fn objective(&self, p: &Params, penalty: f64) -> f64 {
        self.loss(p) + penalty * p.l1()
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub params: Params,
    /// Objective after initialization and after every iteration; the
    /// iterate only moves when the objective does not increase.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `loss + penalty · Σ|W|` from zero.
///
/// Accelerated proximal gradient with a backtracking estimate of the
/// Lipschitz constant. A candidate that would raise the objective is not
/// taken; momentum restarts from the current iterate instead, so the
/// objective sequence is non-increasing. Stops when an accepted step changes
/// the objective by at most `tolerance` relative to its magnitude.
pub fn minimize(problem: &Problem, penalty: f64, tolerance: f64, max_iterations: usize) -> SolverOutcome {
    let (k, f) = (problem.n_classes, problem.n_features);
    let mut x = Params::zeros(k, f);
    let mut fx = problem.objective(&x, penalty);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        let (fy, gy) = problem.loss_and_gradient(&y);
        let (z, fz_smooth) = loop {
            let step = 1.0 / lipschitz;
            let mut z = y.axpy(-step, &gy);
            for w in &mut z.weights {
                *w = soft_threshold(*w, penalty * step);
            }
            let fz = problem.loss(&z);
            let d = z.sub(&y);
            let bound = fy + gy.dot(&d) + 0.5 * lipschitz * d.dot(&d);
            if fz <= bound + 1e-12 * fy.abs().max(1.0) || lipschitz > 1e12 {
                break (z, fz);
            }
            lipschitz *= 2.0;
        };
        let fz = fz_smooth + penalty * z.l1();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if fz <= fx {
            let change = fx - fz;
            let previous = std::mem::replace(&mut x, z);
            fx = fz;
            trace.push(fx);
            if change <= tolerance * fx.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
            let momentum = (t - 1.0) / t_next;
            y = x.axpy(momentum, &x.sub(&previous));
            t = t_next;
        } else {
            trace.push(fx);
            y = x.clone();
            t = 1.0;
        }
    }
    SolverOutcome { params: x, trace, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_problem(seed: u64, n: usize, f: usize, k: usize) -> (Problem, Params) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..f).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-2.0..2.0) }).collect())
            .collect();
        let targets: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let labels = targets.iter().map(|t| t.to_string()).collect();
        let x = FeatureMatrix::from_rows(&rows, labels).unwrap();
        let p = Params {
            weights: (0..k * f).map(|_| rng.random_range(-1.0..1.0)).collect(),
            intercepts: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        (Problem::new(&x, targets, k).unwrap(), p)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (problem, p) = random_problem(1, 30, 5, 3);
        let (_, g) = problem.loss_and_gradient(&p);
        let h = 1e-6;
        for idx in 0..p.weights.len() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.weights[idx] += h;
            minus.weights[idx] -= h;
            let fd = (problem.loss(&plus) - problem.loss(&minus)) / (2.0 * h);
            assert!((fd - g.weights[idx]).abs() <= 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn objective_never_increases(seed in 0u64..10_000, c in 0.05f64..5.0) {
            let (problem, _) = random_problem(seed, 40, 6, 3);
            let out = minimize(&problem, 1.0 / c, 1e-9, 500);
            for w in out.trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
