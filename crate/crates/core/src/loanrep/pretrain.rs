use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::model::{AvatarEmbedding, ChannelRange, CHANNELS, Z_DIM};
use crate::error::{Error, Result};
use crate::mom::{leaves, select_queries, Embedding};
use crate::nn::param_grads;
use crate::optim::Optimizer;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Bipolar channels stay this far inside `(-1, 1)` so tanh can reach every
/// target quantile.
pub const TANH_MARGIN: f64 = 0.02;

/// Target marginal of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    /// `N(0, variance)` on a face scale where the channel's extremes sit at
    /// `+-scale`, clipped to the channel range.
    ClippedNormal {
        variance: f64,
        scale: f64,
    },
    Uniform01,
    /// Beta(1, 2), density `2 (1 - x)` on `[0, 1]`.
    Beta12,
    /// Explicit quantiles at the pretraining levels.
    Quantiles(Vec<f64>),
}

impl Marginal {
    /// Inverse CDF at `level` in `(0, 1)`.
    pub fn quantile(&self, level: f64) -> f64 {
        match self {
            Marginal::ClippedNormal { variance, scale } => {
                let n = Normal::new(0.0, variance.sqrt()).expect("positive variance");
                (n.inverse_cdf(level) / scale).clamp(-1.0 + TANH_MARGIN, 1.0 - TANH_MARGIN)
            }
            Marginal::Uniform01 => level,
            Marginal::Beta12 => 1.0 - (1.0 - level).sqrt(),
            Marginal::Quantiles(q) => {
                let k = ((level * q.len() as f64 - 0.5).round() as usize).min(q.len() - 1);
                q[k]
            }
        }
    }
}

/// Bipolar channels get a clipped `N(0, 4)` on a `+-4` face scale, except
/// age, which is uniform; emotions get Beta(1, 2).
pub fn default_marginals() -> Vec<Marginal> {
    CHANNELS
        .iter()
        .map(|c| match (c.name, c.range) {
            ("age", _) => Marginal::Uniform01,
            (_, ChannelRange::Bipolar) => Marginal::ClippedNormal {
                variance: 4.0,
                scale: 4.0,
            },
            (_, ChannelRange::Positive) => Marginal::Beta12,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub levels: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            batch: 512,
            lr: 0.01,
            levels: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub loss_first: f64,
    pub loss_last: f64,
}

/// Quantile levels `(k + 0.5) / levels`.
pub fn levels(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| (k as f64 + 0.5) / count as f64)
        .collect()
}

/// Pushes the data through `phi` and matches each channel's marginal:
/// per epoch, a batch's outputs are sorted per channel and the order
/// statistics at the quantile levels are regressed onto the target
/// quantiles. The decoder is untouched.
pub fn pretrain_embedding(
    phi: &mut AvatarEmbedding,
    inputs: &Tensor,
    marginals: &[Marginal],
    config: &PretrainConfig,
    seed: u64,
) -> Result<PretrainReport> {
    if marginals.len() != Z_DIM {
        return Err(Error::Config(format!(
            "need {Z_DIM} marginals, got {}",
            marginals.len()
        )));
    }
    if config.levels == 0 || config.batch < config.levels {
        return Err(Error::Config(
            "batch must cover every quantile level".into(),
        ));
    }
    let lv = levels(config.levels);
    let targets: Vec<f64> = marginals
        .iter()
        .flat_map(|m| lv.iter().map(move |&l| m.quantile(l)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Optimizer::adam(config.lr);
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..config.epochs {
        let rows = if config.batch < inputs.rows() {
            inputs.select_rows(&select_queries(inputs.rows(), config.batch, &mut rng)?)
        } else {
            inputs.clone()
        };
        let n = rows.rows();
        let mut tape = Tape::new();
        let p = leaves(&mut tape, phi.params());
        let x = tape.leaf(rows);
        let z = phi.embed(&mut tape, &p, x)?;
        let zv = tape.value(z);
        let mut index = Vec::with_capacity(Z_DIM * lv.len());
        for c in 0..Z_DIM {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| zv.data()[a * Z_DIM + c].total_cmp(&zv.data()[b * Z_DIM + c]));
            for &l in &lv {
                let k = ((l * n as f64 - 0.5).round() as usize).min(n - 1);
                index.push(order[k] * Z_DIM + c);
            }
        }
        let picked = tape.gather(z, index, &[targets.len()])?;
        let target = tape.leaf(Tensor::vector(targets.clone()));
        let d = tape.sub(picked, target)?;
        let sq = tape.square(d);
        let loss = tape.mean(sq);
        let value = tape.value(loss).data()[0];
        first.get_or_insert(value);
        last = value;
        let grads = tape.backward(loss)?;
        let g = param_grads(&tape, &grads, &p);
        opt.step(phi.params_mut(), &g);
    }
    Ok(PretrainReport {
        loss_first: first.unwrap_or(0.0),
        loss_last: last,
    })
}
