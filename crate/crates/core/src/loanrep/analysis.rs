use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Penalties tried by [`ridge_analysis`].
pub const RIDGE_LAMBDAS: [f64; 7] = [1e-6, 1e-4, 1e-2, 0.1, 1.0, 10.0, 100.0];

/// Permutes representations within each group of equal proxy prediction
/// (`pred > 0.5`). Returns the shuffled rows and the source row of each.
pub fn shuffle_within_predictions<R: Rng + ?Sized>(
    z: &Tensor,
    pred: &[f64],
    rng: &mut R,
) -> Result<(Tensor, Vec<usize>)> {
    if z.rows() != pred.len() {
        return Err(Error::Shape {
            op: "shuffle",
            detail: format!("{} rows for {} predictions", z.rows(), pred.len()),
        });
    }
    let mut source: Vec<usize> = (0..pred.len()).collect();
    for label in [false, true] {
        let members: Vec<usize> = (0..pred.len())
            .filter(|&i| (pred[i] > 0.5) == label)
            .collect();
        let mut perm = members.clone();
        perm.shuffle(rng);
        for (&dst, &src) in members.iter().zip(&perm) {
            source[dst] = src;
        }
    }
    Ok((z.select_rows(&source), source))
}

/// Index of the knee of a curve: the point farthest from the chord joining
/// its endpoints after scaling both axes to `[0, 1]`.
pub fn knee_index(points: &[(f64, f64)]) -> Option<usize> {
    if points.len() < 3 {
        return (!points.is_empty()).then_some(0);
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, xs) = span(|p| p.0);
    let (y0, ys) = span(|p| p.1);
    let norm: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p.0 - x0) / xs, (p.1 - y0) / ys))
        .collect();
    let (a, b) = (norm[0], norm[norm.len() - 1]);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return Some(0);
    }
    norm.iter()
        .enumerate()
        .map(|(i, p)| (i, ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len))
        .max_by(|l, r| l.1.total_cmp(&r.1))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeReport {
    pub features: Vec<String>,
    pub channels: Vec<String>,
    /// Cross-validated R^2 of each feature (row) on each single channel.
    pub r2: Vec<Vec<f64>>,
    /// Coefficients of each feature on all channels, refit on all rows with
    /// the cross-validated penalty.
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// Cross-validated R^2 of each feature on all channels.
    pub r2_all: Vec<f64>,
    pub lambda_all: Vec<f64>,
}

impl RidgeReport {
    /// Channel with the largest single-channel R^2 for `feature`.
    pub fn top_channel(&self, feature: &str) -> Option<(&str, f64)> {
        let f = self.features.iter().position(|n| n == feature)?;
        self.r2[f]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(c, &v)| (self.channels[c].as_str(), v))
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<16}", "R^2");
        for f in &self.features {
            out += &format!("{f:>9}");
        }
        out.push('\n');
        for (c, name) in self.channels.iter().enumerate() {
            out += &format!("{name:<16}");
            for row in &self.r2 {
                out += &format!("{:>9.3}", row[c]);
            }
            out.push('\n');
        }
        out += &format!("{:<16}", "all channels");
        for v in &self.r2_all {
            out += &format!("{v:>9.3}");
        }
        out.push('\n');
        out
    }
}

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.row(i)[j]).collect()
}

/// Ridge fit with an unpenalized intercept: `(intercept, weights)`.
fn ridge_fit(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<(f64, DVector<f64>)> {
    let n = a.nrows() as f64;
    let mean_a = a.row_mean();
    let mean_y = y.mean();
    let ac = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - mean_a[j]);
    let yc = y.add_scalar(-mean_y);
    let gram = ac.transpose() * &ac + DMatrix::identity(a.ncols(), a.ncols()) * (lambda * n);
    let w = gram
        .cholesky()
        .ok_or(Error::Singular("ridge"))?
        .solve(&(ac.transpose() * yc));
    let b = mean_y - (mean_a * &w)[0];
    Ok((b, w))
}

fn cv_r2(a: &DMatrix<f64>, y: &DVector<f64>, folds: usize, lambda: f64) -> Result<f64> {
    let n = a.nrows();
    let mut sse = 0.0;
    for k in 0..folds {
        let test: Vec<usize> = (0..n).filter(|i| i * folds / n == k).collect();
        let train: Vec<usize> = (0..n).filter(|i| i * folds / n != k).collect();
        let at = a.select_rows(&train);
        let yt = y.select_rows(&train);
        let (b, w) = ridge_fit(&at, &yt, lambda)?;
        for &i in &test {
            let pred = b + (a.row(i) * &w)[0];
            sse += (y[i] - pred).powi(2);
        }
    }
    let m = y.mean();
    let sst: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    Ok(if sst > 0.0 { 1.0 - sse / sst } else { 0.0 })
}

fn best_lambda(a: &DMatrix<f64>, y: &DVector<f64>, folds: usize) -> Result<(f64, f64)> {
    let mut best = (RIDGE_LAMBDAS[0], f64::NEG_INFINITY);
    for &l in &RIDGE_LAMBDAS {
        let r2 = cv_r2(a, y, folds, l)?;
        if r2 > best.1 {
            best = (l, r2);
        }
    }
    Ok(best)
}

/// Cross-validated ridge regressions of each input feature on each single
/// representation channel and on all channels together. Folds are
/// contiguous blocks of rows.
pub fn ridge_analysis(
    z: &Tensor,
    x: &Tensor,
    features: &[String],
    channels: &[String],
    folds: usize,
) -> Result<RidgeReport> {
    let n = z.rows();
    if folds < 2 || n < folds {
        return Err(Error::TooFew {
            what: "rows for the requested folds",
            needed: folds.max(2),
            got: n,
        });
    }
    if x.rows() != n || features.len() != x.row_len() || channels.len() != z.row_len() {
        return Err(Error::Shape {
            op: "ridge_analysis",
            detail: format!(
                "z {:?} with {} names, x {:?} with {} names",
                z.shape(),
                channels.len(),
                x.shape(),
                features.len()
            ),
        });
    }
    let zm = DMatrix::from_row_slice(n, z.row_len(), z.data());
    let mut report = RidgeReport {
        features: features.to_vec(),
        channels: channels.to_vec(),
        r2: Vec::new(),
        coefficients: Vec::new(),
        intercepts: Vec::new(),
        r2_all: Vec::new(),
        lambda_all: Vec::new(),
    };
    for f in 0..x.row_len() {
        let y = DVector::from_vec(column(x, f));
        let mut row = Vec::with_capacity(z.row_len());
        for c in 0..z.row_len() {
            let a = DMatrix::from_vec(n, 1, column(z, c));
            row.push(best_lambda(&a, &y, folds)?.1);
        }
        report.r2.push(row);
        let (lambda, r2) = best_lambda(&zm, &y, folds)?;
        let (b, w) = ridge_fit(&zm, &y, lambda)?;
        report.coefficients.push(w.iter().copied().collect());
        report.intercepts.push(b);
        report.r2_all.push(r2);
        report.lambda_all.push(lambda);
    }
    Ok(report)
}
