//! Weighted Lasso by coordinate descent, the K-Lasso selection path and the
//! restricted weighted least-squares refit.
//!
//! The objective is `Σ πᵢ (yᵢ − β₀ − βᵀxᵢ)² + λ‖β‖₁` with an unpenalized
//! intercept. Everything runs on the weighted, centered Gram matrix so a
//! coordinate update costs O(p) regardless of the pool size.

use nalgebra::{DMatrix, DVector};

/// Geometric path length from `λ_max` down to `λ_max · PATH_FLOOR`.
pub const PATH_STEPS: usize = 100;
pub const PATH_FLOOR: f64 = 1e-4;
/// Diagonal damping added to the refit normal equations.
pub const REFIT_RIDGE: f64 = 1e-8;

const CD_TOLERANCE: f64 = 1e-13;
const CD_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LassoError {
    /// Every response is identical; there is nothing to explain.
    ZeroSignal,
    Numerical(String),
    Shape(String),
}

impl std::fmt::Display for LassoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LassoError::ZeroSignal => f.write_str("all responses are equal (zero signal)"),
            LassoError::Numerical(m) => write!(f, "numerical failure: {m}"),
            LassoError::Shape(m) => write!(f, "bad design: {m}"),
        }
    }
}

impl std::error::Error for LassoError {}

/// Weighted, centered sufficient statistics of a regression problem.
#[derive(Debug, Clone)]
pub struct WeightedProblem {
    n_features: usize,
    x_mean: Vec<f64>,
    y_mean: f64,
    /// `Σ πᵢ (xᵢ − x̄)(xᵢ − x̄)ᵀ`, row-major p×p.
    gram: Vec<f64>,
    /// `Σ πᵢ (xᵢ − x̄)(yᵢ − ȳ)`.
    cov: Vec<f64>,
}

impl WeightedProblem {
    /// `rows` holds one feature vector per sample.
    pub fn new(rows: &[Vec<f64>], y: &[f64], weights: &[f64]) -> Result<Self, LassoError> {
        let n = rows.len();
        if n < 2 || y.len() != n || weights.len() != n {
            return Err(LassoError::Shape(format!(
                "{n} rows, {} responses, {} weights",
                y.len(),
                weights.len()
            )));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(LassoError::Shape("ragged rows".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || y.iter().any(|v| !v.is_finite()) {
            return Err(LassoError::Numerical("non-finite weight or response".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(LassoError::Numerical("weights sum to zero".into()));
        }

        let (lo, hi) = y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Err(LassoError::ZeroSignal);
        }

        let mut x_mean = vec![0.0; p];
        let mut y_mean = 0.0;
        for ((row, &yi), &wi) in rows.iter().zip(y).zip(weights) {
            for (m, &v) in x_mean.iter_mut().zip(row) {
                *m += wi * v;
            }
            y_mean += wi * yi;
        }
        x_mean.iter_mut().for_each(|m| *m /= total);
        y_mean /= total;

        let mut gram = vec![0.0; p * p];
        let mut cov = vec![0.0; p];
        let mut centered = vec![0.0; p];
        for ((row, &yi), &wi) in rows.iter().zip(y).zip(weights) {
            for j in 0..p {
                centered[j] = row[j] - x_mean[j];
            }
            let yc = yi - y_mean;
            for j in 0..p {
                let wj = wi * centered[j];
                cov[j] += wj * yc;
                for k in j..p {
                    gram[j * p + k] += wj * centered[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                gram[j * p + k] = gram[k * p + j];
            }
        }

        Ok(Self {
            n_features: p,
            x_mean,
            y_mean,
            gram,
            cov,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Smallest λ for which the all-zero solution is optimal.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self.cov.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    fn intercept(&self, coef: &[f64]) -> f64 {
        self.y_mean - coef.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum::<f64>()
    }

    /// Coordinate descent at a single λ, warm-started from `coef`.
    pub fn lasso_in_place(&self, lambda: f64, coef: &mut [f64]) {
        let p = self.n_features;
        let half = lambda / 2.0;
        for _ in 0..CD_MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[j * p + j];
                if gjj <= 0.0 {
                    coef[j] = 0.0;
                    continue;
                }
                let row = &self.gram[j * p..(j + 1) * p];
                let mut partial = self.cov[j];
                for (k, (&g, &b)) in row.iter().zip(coef.iter()).enumerate() {
                    if k != j {
                        partial -= g * b;
                    }
                }
                let updated = soft_threshold(partial, half) / gjj;
                max_delta = max_delta.max((updated - coef[j]).abs() * gjj.sqrt());
                coef[j] = updated;
            }
            if max_delta < CD_TOLERANCE {
                break;
            }
        }
    }

    pub fn lasso(&self, lambda: f64) -> LassoFit {
        let mut coef = vec![0.0; self.n_features];
        self.lasso_in_place(lambda, &mut coef);
        LassoFit {
            intercept: self.intercept(&coef),
            coef,
        }
    }

    /// Walks the λ path and returns `min(k, p)` feature indices.
    pub fn k_lasso_select(&self, k: usize) -> Vec<usize> {
        let p = self.n_features;
        let k = k.min(p);
        if k == 0 {
            return Vec::new();
        }
        let lambda_max = self.lambda_max();
        let mut coef = vec![0.0; p];
        if lambda_max > 0.0 {
            let ratio = PATH_FLOOR.powf(1.0 / (PATH_STEPS - 1) as f64);
            for step in 0..PATH_STEPS {
                let lambda = lambda_max * ratio.powi(step as i32);
                self.lasso_in_place(lambda, &mut coef);
                let nonzero = coef.iter().filter(|b| **b != 0.0).count();
                if nonzero >= k {
                    // Exactly k, or the count jumped past k: keep the k largest.
                    return top_by_magnitude(&coef, k);
                }
            }
        }
        // The path ended short of k: keep the active set, then fill by
        // covariance with the response.
        let mut chosen: Vec<usize> = top_by_magnitude(&coef, coef.iter().filter(|b| **b != 0.0).count());
        let mut rest: Vec<usize> = (0..p).filter(|j| !chosen.contains(j)).collect();
        rest.sort_by(|&a, &b| self.cov[b].abs().total_cmp(&self.cov[a].abs()).then(a.cmp(&b)));
        chosen.extend(rest.into_iter().take(k - chosen.len()));
        chosen
    }

    /// Weighted least squares restricted to `features`, damped by `ridge`.
    pub fn refit(&self, features: &[usize], ridge: f64) -> Result<LassoFit, LassoError> {
        let p = self.n_features;
        let s = features.len();
        let mut coef = vec![0.0; p];
        if s > 0 {
            let a = DMatrix::from_fn(s, s, |r, c| {
                self.gram[features[r] * p + features[c]] + if r == c { ridge } else { 0.0 }
            });
            let b = DVector::from_iterator(s, features.iter().map(|&j| self.cov[j]));
            let solution = match a.clone().cholesky() {
                Some(chol) => chol.solve(&b),
                None => a
                    .lu()
                    .solve(&b)
                    .ok_or_else(|| LassoError::Numerical("singular refit system".into()))?,
            };
            for (r, &j) in features.iter().enumerate() {
                coef[j] = solution[r];
            }
        }
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(LassoError::Numerical("non-finite refit weights".into()));
        }
        Ok(LassoFit {
            intercept: self.intercept(&coef),
            coef,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

pub fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// Indices of the `k` largest |coef|, descending, ties toward the lower index.
fn top_by_magnitude(coef: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coef.len()).collect();
    idx.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
