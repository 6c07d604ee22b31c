//! Conjugate Bayesian linear regression over last-layer features, used to
//! stop embedding training once the proxy's uncertainty has grown.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrConfig {
    pub enabled: bool,
    /// Epochs between feature checkpoints.
    pub checkpoint_every: usize,
    pub prior_precision: f64,
    pub noise_precision: f64,
    /// Stop once mean variance reaches this multiple of the first checkpoint's.
    pub variance_ratio: f64,
}

impl Default for BlrConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            checkpoint_every: 50,
            prior_precision: 1.0,
            noise_precision: 1.0,
            variance_ratio: 2.0,
        }
    }
}

/// Gaussian posterior over linear weights with a zero-mean isotropic prior.
#[derive(Debug, Clone)]
pub struct BlrPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub noise_precision: f64,
}

impl BlrPosterior {
    /// `S^-1 = a I + b F^T F`, `m = b S F^T t`.
    pub fn fit(
        features: &Tensor,
        targets: &[f64],
        prior_precision: f64,
        noise_precision: f64,
    ) -> Result<Self> {
        let (n, f) = (features.rows(), features.row_len());
        if targets.len() != n {
            return Err(Error::Shape {
                op: "blr",
                detail: format!("{n} feature rows, {} targets", targets.len()),
            });
        }
        let phi = DMatrix::from_row_slice(n, f, features.data());
        let t = DVector::from_column_slice(targets);
        let precision =
            DMatrix::identity(f, f) * prior_precision + phi.transpose() * &phi * noise_precision;
        let chol = precision
            .cholesky()
            .ok_or(Error::Singular("blr posterior"))?;
        let covariance = chol.inverse();
        let mean = &covariance * phi.transpose() * t * noise_precision;
        Ok(Self {
            mean,
            covariance,
            noise_precision,
        })
    }

    /// Predictive mean and weight-uncertainty variance `f^T S f` of one row.
    pub fn predict(&self, row: &[f64]) -> (f64, f64) {
        let x = DVector::from_column_slice(row);
        let mean = self.mean.dot(&x);
        let var = (x.transpose() * &self.covariance * &x)[(0, 0)];
        (mean, var)
    }

    /// Mean of `f^T S f` over the rows of `features`.
    pub fn mean_variance(&self, features: &Tensor) -> f64 {
        let n = features.rows().max(1);
        (0..features.rows())
            .map(|i| self.predict(features.row(i)).1)
            .sum::<f64>()
            / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrStop {
    /// Checkpoint at which the variance first reached the threshold.
    pub checkpoint: Option<usize>,
    pub epoch: usize,
    pub variances: Vec<f64>,
}

/// Fits a posterior at each checkpoint of `trajectory` (feature matrices
/// sampled every `config.checkpoint_every` epochs) and returns the first
/// epoch whose mean variance is at least `variance_ratio` times that of
/// checkpoint 0, or `final_epoch` when that never happens.
pub fn blr_early_stop(
    trajectory: &[Tensor],
    targets: &[f64],
    config: &BlrConfig,
    final_epoch: usize,
) -> Result<BlrStop> {
    if trajectory.len() < 2 {
        return Err(Error::TooFew {
            what: "checkpoints",
            needed: 2,
            got: trajectory.len(),
        });
    }
    let variances = trajectory
        .iter()
        .map(|f| {
            BlrPosterior::fit(f, targets, config.prior_precision, config.noise_precision)
                .map(|p| p.mean_variance(f))
        })
        .collect::<Result<Vec<f64>>>()?;
    let base = variances[0];
    let checkpoint = variances
        .iter()
        .position(|&v| v >= config.variance_ratio * base)
        .filter(|&c| c > 0);
    let epoch = checkpoint.map_or(final_epoch, |c| {
        (c * config.checkpoint_every).min(final_epoch)
    });
    Ok(BlrStop {
        checkpoint,
        epoch,
        variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_never_stop() {
        let f = Tensor::from_rows(&[[1.0, 0.5], [0.2, -0.3], [0.7, 0.1]]);
        let traj = vec![f.clone(); 5];
        let stop = blr_early_stop(&traj, &[1.0, 0.0, 1.0], &BlrConfig::default(), 200).unwrap();
        assert_eq!(stop.checkpoint, None);
        assert_eq!(stop.epoch, 200);
    }

    #[test]
    fn needs_two_checkpoints() {
        let f = Tensor::from_rows(&[[1.0]]);
        assert!(blr_early_stop(&[f], &[1.0], &BlrConfig::default(), 10).is_err());
    }

    #[test]
    fn posterior_mean_matches_ridge() {
        // With a = lambda * b the posterior mean is the ridge solution.
        let f = Tensor::from_rows(&[[1.0], [2.0], [3.0]]);
        let t = [2.0, 4.0, 6.0];
        let p = BlrPosterior::fit(&f, &t, 1.0, 1.0).unwrap();
        // (F^T F + 1)^-1 F^T t = 28 / 15
        assert!((p.mean[0] - 28.0 / 15.0).abs() < 1e-12);
        assert!((p.covariance[(0, 0)] - 1.0 / 15.0).abs() < 1e-12);
    }
}
