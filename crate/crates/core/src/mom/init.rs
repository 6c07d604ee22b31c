use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{leaves, select_queries, Dataset, Embedding, Proxy};
use crate::error::{Error, Result};
use crate::nn::{param_grads, LossKind};
use crate::optim::Optimizer;
use crate::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputerOnlyConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: Option<usize>,
    pub validation_fraction: f64,
}

impl Default for ComputerOnlyConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.03,
            batch: None,
            validation_fraction: 0.2,
        }
    }
}

/// Trains `phi` jointly with a disposable classifier `head` on the ground
/// truth and returns the trained embedding together with the head's
/// accuracy on a held-out split. The head itself is dropped.
pub fn init_computer_only<E: Embedding, H: Proxy, R: Rng + ?Sized>(
    phi: &E,
    mut head: H,
    data: &Dataset,
    config: &ComputerOnlyConfig,
    rng: &mut R,
) -> Result<(E, f64)> {
    if data.len() < 2 {
        return Err(Error::TooFew {
            what: "labeled rows",
            needed: 2,
            got: data.len(),
        });
    }
    let mut phi = phi.clone();
    head.reinitialize(rng);
    let perm = select_queries(data.len(), data.len(), rng)?;
    let n_val = ((data.len() as f64 * config.validation_fraction).round() as usize)
        .clamp(1, data.len() - 1);
    let (val, train) = perm.split_at(n_val);
    let train = data.subset(train);
    let val = data.subset(val);

    let mut opt_phi = Optimizer::adam(config.lr);
    let mut opt_head = Optimizer::adam(config.lr);
    for step in 0..config.epochs {
        let batch = match config.batch {
            Some(b) if b < train.len() => train.subset(&select_queries(train.len(), b, rng)?),
            _ => train.clone(),
        };
        let mut tape = Tape::new();
        let pp = leaves(&mut tape, phi.params());
        let hp = leaves(&mut tape, head.params());
        let x = tape.leaf(batch.inputs);
        let z = phi.embed(&mut tape, &pp, x)?;
        let pred = head.predict(&mut tape, &hp, z)?;
        let mut loss = LossKind::Bce.apply(&mut tape, pred, &batch.labels)?;
        if let Some(r) = phi.regularizer(&mut tape, &pp, x, z)? {
            loss = tape.add(loss, r)?;
        }
        if !tape.value(loss).data()[0].is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let grads = tape.backward(loss)?;
        let gp = param_grads(&tape, &grads, &pp);
        let gh = param_grads(&tape, &grads, &hp);
        opt_phi.step(phi.params_mut(), &gp);
        opt_head.step(head.params_mut(), &gh);
    }

    let z = super::embed_all(&phi, &val.inputs)?;
    let pred = super::proxy_predict(&head, &z)?;
    let acc = super::agreement(&pred, &val.labels, 0.5);
    Ok((phi, acc))
}
