use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::{human_respond, HumanKind, Sample};
use crate::error::{Error, Result};

/// Ridge added to the normal equations so collinear designs still solve.
pub const OLS_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub bias: f64,
    pub w: [f64; 4],
}

impl LinearModel {
    pub fn predict(&self, x: &[f64; 4]) -> f64 {
        self.bias + x.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Least squares of `y` on the four features with an intercept.
pub fn fit_machine_baseline(train: &[Sample]) -> Result<LinearModel> {
    if train.len() < 5 {
        return Err(Error::TooFew {
            what: "training samples",
            needed: 5,
            got: train.len(),
        });
    }
    let x = DMatrix::from_fn(train.len(), 5, |i, j| {
        if j == 0 {
            1.0
        } else {
            f64::from(train[i].x[j - 1])
        }
    });
    let y = DVector::from_iterator(train.len(), train.iter().map(|s| f64::from(s.y)));
    let xtx = x.transpose() * &x + DMatrix::identity(5, 5) * OLS_RIDGE;
    let beta = xtx
        .cholesky()
        .ok_or(Error::Singular("least-squares design"))?
        .solve(&(x.transpose() * y));
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Singular("least-squares design"));
    }
    Ok(LinearModel {
        bias: beta[0],
        w: [beta[1], beta[2], beta[3], beta[4]],
    })
}

/// Accuracy of `1{respond(sample) > threshold}` against `y > 3`.
pub fn evaluate_policy(
    respond: impl Fn(&Sample) -> f64,
    test: &[Sample],
    threshold: f64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::TooFew {
            what: "test samples",
            needed: 1,
            got: 0,
        });
    }
    let hits = test
        .iter()
        .filter(|s| (respond(s) > threshold) == s.y_bin())
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// The decision maker acting on a linear model's advice, with the
/// model's intercept added outside the human's response.
pub fn assisted_response(kind: HumanKind, model: &LinearModel, sample: &Sample) -> f64 {
    model.bias + human_respond(kind, &sample.xf(), &model.w, sample.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sideinfo::generate_dataset;

    #[test]
    fn recovers_exact_linear_relation() {
        // y = x_c + x_d + s where s is constant 1 here.
        let data: Vec<Sample> = (0..16u8)
            .map(|k| {
                let x = [k & 1, (k >> 1) & 1, (k >> 2) & 1, (k >> 3) & 1];
                Sample {
                    x,
                    s: 1,
                    y: x[2] + x[3] + 1,
                }
            })
            .collect();
        let m = fit_machine_baseline(&data).unwrap();
        assert!((m.bias - 1.0).abs() < 1e-6);
        for (got, want) in m.w.iter().zip([0.0, 0.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_design_stays_finite() {
        let data = vec![
            Sample {
                x: [1, 1, 1, 1],
                s: 0,
                y: 2
            };
            10
        ];
        let m = fit_machine_baseline(&data).unwrap();
        assert!((m.predict(&[1.0; 4]) - 2.0).abs() < 1e-4);
    }

    #[test]
    fn exact_predictor_is_perfect_and_constant_gives_base_rate() {
        let test = generate_dataset(500, 4);
        assert_eq!(
            evaluate_policy(|s| f64::from(s.y), &test, 3.5).unwrap(),
            1.0
        );
        let base = test.iter().filter(|s| !s.y_bin()).count() as f64 / 500.0;
        assert_eq!(evaluate_policy(|_| 0.0, &test, 3.5).unwrap(), base);
        assert!(evaluate_policy(|_| 0.0, &[], 3.5).is_err());
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_machine_baseline(&generate_dataset(4, 0)).is_err());
    }
}
