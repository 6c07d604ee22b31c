//! The alternating human-in-the-loop procedure: gather decisions on the
//! current representations, fit a differentiable proxy of the decision maker,
//! then retrain the embedding through the frozen proxy.

mod config;
mod embed;
mod init;
mod proxy_fit;
mod session;

pub use config::{LoopConfig, LrSchedule};
pub use embed::{optimize_embedding, EmbedReport, EpochLoss, Probe};
pub use init::{init_computer_only, ComputerOnlyConfig};
pub use proxy_fit::{fit_proxy, train_proxy, validation_error, ProxyFit};
pub use session::{
    Query, QueryBatch, Record, Response, ResponseBuffer, RoundMetrics, RoundRecords, Session,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// The trainable map from raw inputs to representations.
pub trait Embedding: Clone {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    /// Maps a batch of raw inputs `(n, d)` to representations `(n, k)`.
    fn embed(&self, tape: &mut Tape, params: &[Var], inputs: Var) -> Result<Var>;
    /// Extra terms added to the embedding objective.
    fn regularizer(
        &self,
        _tape: &mut Tape,
        _params: &[Var],
        _inputs: Var,
        _z: Var,
    ) -> Result<Option<Var>> {
        Ok(None)
    }
}

/// A differentiable stand-in for the human mapping from representations to
/// actions.
pub trait Proxy: Clone {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R);
    /// Predicted action for a batch of representations `(n, k)`.
    fn predict(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var> {
        let u = self.transform(tape, z)?;
        self.predict_transformed(tape, params, u)
    }
    /// Parameter-free preprocessing of the representations. Fitting the
    /// proxy evaluates it once rather than every epoch.
    fn transform(&self, _tape: &mut Tape, z: Var) -> Result<Var> {
        Ok(z)
    }
    /// Prediction from already transformed inputs.
    fn predict_transformed(&self, tape: &mut Tape, params: &[Var], u: Var) -> Result<Var>;
    /// Inputs of the proxy's final linear layer.
    fn features(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var>;
}

pub(crate) fn leaves(tape: &mut Tape, params: Vec<&Tensor>) -> Vec<Var> {
    params.into_iter().map(|p| tape.leaf(p.clone())).collect()
}

impl Embedding for Network {
    fn params(&self) -> Vec<&Tensor> {
        Network::params(self).iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Network::params_mut(self).iter_mut().collect()
    }

    fn embed(&self, tape: &mut Tape, params: &[Var], inputs: Var) -> Result<Var> {
        self.apply(tape, params, inputs)
    }
}

impl Proxy for Network {
    fn params(&self) -> Vec<&Tensor> {
        Network::params(self).iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Network::params_mut(self).iter_mut().collect()
    }

    fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        Network::reinitialize(self, rng)
    }

    fn predict_transformed(&self, tape: &mut Tape, params: &[Var], u: Var) -> Result<Var> {
        self.apply(tape, params, u)
    }

    fn features(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var> {
        let h = self.apply_range(tape, params, z, 0..self.feature_layers())?;
        let rows = tape.value(h).rows();
        let width = tape.value(h).row_len();
        tape.reshape(h, &[rows, width])
    }
}

/// Raw inputs with ground-truth outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<f64>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                detail: format!("{} rows, {} labels", inputs.rows(), labels.len()),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Uniform sample of `n` distinct indices out of `available`, in random order.
pub fn select_queries<R: Rng + ?Sized>(
    available: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n > available {
        return Err(Error::TooManyQueries {
            requested: n,
            available,
        });
    }
    let mut idx: Vec<usize> = (0..available).collect();
    for i in 0..n {
        let j = rng.random_range(i..available);
        idx.swap(i, j);
    }
    idx.truncate(n);
    Ok(idx)
}

/// Representations of `inputs` under `phi`, without gradients.
pub fn embed_all<E: Embedding>(phi: &E, inputs: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = leaves(&mut tape, phi.params());
    let x = tape.leaf(inputs.clone());
    let z = phi.embed(&mut tape, &p, x)?;
    Ok(tape.value(z).clone())
}

/// Proxy outputs for a batch of representations, flattened.
pub fn proxy_predict<P: Proxy>(proxy: &P, z: &Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = leaves(&mut tape, proxy.params());
    let zv = tape.leaf(z.clone());
    let out = proxy.predict(&mut tape, &p, zv)?;
    Ok(tape.value(out).data().to_vec())
}

/// Fraction of positions where both values fall on the same side of `threshold`.
pub fn agreement(a: &[f64], b: &[f64], threshold: f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let hits = a
        .iter()
        .zip(b)
        .filter(|(&x, &y)| (x > threshold) == (y > threshold))
        .count();
    hits as f64 / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn select_whole_dataset_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = select_queries(10, 10, &mut rng).unwrap();
        q.sort();
        assert_eq!(q, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn select_distinct_and_deterministic() {
        let a = select_queries(75_933, 200, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = select_queries(75_933, 200, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 200);
        assert!(a.iter().all(|&i| i < 75_933));
    }

    #[test]
    fn select_too_many_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            select_queries(3, 4, &mut rng),
            Err(Error::TooManyQueries {
                requested: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn agreement_counts_sides() {
        assert_eq!(
            agreement(&[0.9, 0.1, 0.6], &[1.0, 1.0, 0.0], 0.5),
            1.0 / 3.0
        );
    }
}
