//! Tabular baselines over design vectors: ridge regression and
//! inverse-distance kNN. Both standardize features with population moments
//! of the training rows and handle multi-output targets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SurrogateError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>]) -> Result<Self, SurrogateError> {
        let n = x.len();
        if n == 0 {
            return Err(SurrogateError::Data("no training rows".into()));
        }
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(SurrogateError::Data("ragged feature rows".into()));
        }
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let scale = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.scale)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

fn check_targets(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize, SurrogateError> {
    if x.len() != y.len() {
        return Err(SurrogateError::Data(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    let m = y.first().map_or(0, |r| r.len());
    if y.iter().any(|r| r.len() != m) {
        return Err(SurrogateError::Data("ragged target rows".into()));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    std: Standardizer,
    /// d×m weights on standardized features.
    pub coef: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

impl RidgeModel {
    /// Weights expressed on the raw feature scale.
    pub fn raw_coef(&self) -> Vec<Vec<f64>> {
        self.coef.iter().zip(&self.std.scale).map(|(w, s)| w.iter().map(|x| x / s).collect()).collect()
    }
}

/// Closed-form ridge on standardized features; the intercept is the target
/// mean and is not penalized.
pub fn ridge_fit(x: &[Vec<f64>], y: &[Vec<f64>], alpha: f64) -> Result<RidgeModel, SurrogateError> {
    if !(alpha >= 0.0) {
        return Err(SurrogateError::Config(format!("alpha {alpha} must be non-negative")));
    }
    let std = Standardizer::fit(x)?;
    let m = check_targets(x, y)?;
    let n = x.len();
    let d = std.mean.len();
    let z = DMatrix::from_fn(n, d, |i, j| (x[i][j] - std.mean[j]) / std.scale[j]);
    let intercept: Vec<f64> = (0..m).map(|k| y.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
    let yc = DMatrix::from_fn(n, m, |i, k| y[i][k] - intercept[k]);
    let a = z.transpose() * &z + DMatrix::identity(d, d) * alpha;
    let rhs = z.transpose() * yc;
    if alpha == 0.0 {
        let sv = z.clone().singular_values();
        let top = sv.max();
        if sv.len() < d || !(sv.min() > 1e-10 * top.max(f64::MIN_POSITIVE)) {
            return Err(SurrogateError::Singular);
        }
    }
    let w = a.cholesky().ok_or(SurrogateError::Singular)?.solve(&rhs);
    let coef = (0..d).map(|j| (0..m).map(|k| w[(j, k)]).collect()).collect();
    Ok(RidgeModel { std, coef, intercept })
}

pub fn ridge_predict(model: &RidgeModel, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let z = model.std.apply(row);
            model
                .intercept
                .iter()
                .enumerate()
                .map(|(k, b)| b + z.iter().zip(&model.coef).map(|(zj, w)| zj * w[k]).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Inverse-distance weighted mean of the `k` nearest training rows in
/// standardized space. A query that coincides with training rows returns
/// the mean of their targets.
pub fn knn_predict(
    train_x: &[Vec<f64>],
    train_y: &[Vec<f64>],
    query: &[Vec<f64>],
    k: usize,
) -> Result<Vec<Vec<f64>>, SurrogateError> {
    if k == 0 {
        return Err(SurrogateError::Config("k must be at least 1".into()));
    }
    if k > train_x.len() {
        return Err(SurrogateError::Config(format!("k = {k} exceeds {} training rows", train_x.len())));
    }
    let std = Standardizer::fit(train_x)?;
    let m = check_targets(train_x, train_y)?;
    let zt: Vec<Vec<f64>> = train_x.iter().map(|r| std.apply(r)).collect();
    Ok(query
        .iter()
        .map(|q| {
            let zq = std.apply(q);
            let mut dist: Vec<(f64, usize)> = zt
                .iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(&zq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let near = &dist[..k];
            let exact: Vec<usize> = near.iter().filter(|(d, _)| *d == 0.0).map(|p| p.1).collect();
            let (idx, w): (Vec<usize>, Vec<f64>) = if exact.is_empty() {
                near.iter().map(|(d, i)| (*i, 1.0 / d)).unzip()
            } else {
                exact.iter().map(|&i| (i, 1.0)).unzip()
            };
            let wsum: f64 = w.iter().sum();
            (0..m).map(|c| idx.iter().zip(&w).map(|(&i, wi)| wi * train_y[i][c]).sum::<f64>() / wsum).collect()
        })
        .collect())
}

/// Ordinary least squares with intercept, for checking ridge at alpha = 0.
pub fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let d = x.first()?.len();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let b = DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    Some(sol.iter().copied().collect())
}
