use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{leaves, select_queries, Dataset, Embedding, LoopConfig, Proxy};
use crate::blr::{blr_early_stop, BlrStop};
use crate::error::{Error, Result};
use crate::nn::param_grads;
use crate::optim::Optimizer;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub total: f64,
    pub decision: f64,
    pub regularizer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedReport {
    /// Pre-update objective of every epoch.
    pub losses: Vec<EpochLoss>,
    /// Epoch whose parameters were kept (differs from `losses.len()` only
    /// after a BLR early stop).
    pub epochs_kept: usize,
    pub blr: Option<BlrStop>,
}

/// Inputs and responses of the labeled region, for BLR early stopping.
#[derive(Debug, Clone)]
pub struct Probe {
    pub inputs: Tensor,
    pub targets: Vec<f64>,
}

fn probe_features<E: Embedding, P: Proxy>(phi: &E, proxy: &P, probe: &Probe) -> Result<Tensor> {
    let mut tape = Tape::new();
    let pp = leaves(&mut tape, phi.params());
    let hp = leaves(&mut tape, proxy.params());
    let x = tape.leaf(probe.inputs.clone());
    let z = phi.embed(&mut tape, &pp, x)?;
    let f = proxy.features(&mut tape, &hp, z)?;
    Ok(tape.value(f).clone())
}

/// Trains `phi` for `config.epochs_embed` Adam steps on
/// `loss_weight * loss(labels, proxy(phi(x))) + regularizers`, with the
/// proxy frozen. `round` only labels diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn optimize_embedding<E: Embedding, P: Proxy, R: Rng + ?Sized>(
    phi: &mut E,
    proxy: &P,
    data: &Dataset,
    config: &LoopConfig,
    lr: f64,
    probe: Option<&Probe>,
    round: usize,
    rng: &mut R,
) -> Result<EmbedReport> {
    let mut opt = Optimizer::adam(lr);
    let mut losses = Vec::with_capacity(config.epochs_embed);
    let blr = config.blr_stop.enabled.then_some(probe).flatten();
    let mut trajectory = Vec::new();
    let mut snapshots: Vec<Vec<Tensor>> = Vec::new();

    for epoch in 0..config.epochs_embed {
        if let Some(p) = blr {
            if epoch % config.blr_stop.checkpoint_every == 0 {
                trajectory.push(probe_features(phi, proxy, p)?);
                snapshots.push(phi.params().into_iter().cloned().collect());
            }
        }

        let batch = match config.embed_batch {
            Some(b) if b < data.len() => data.subset(&select_queries(data.len(), b, rng)?),
            _ => data.clone(),
        };
        let mut tape = Tape::new();
        let pp = leaves(&mut tape, phi.params());
        let hp = leaves(&mut tape, proxy.params());
        let x = tape.leaf(batch.inputs);
        let z = phi.embed(&mut tape, &pp, x)?;

        let decision = if config.loss_weight > 0.0 {
            let pred = proxy.predict(&mut tape, &hp, z)?;
            let l = config.loss.apply(&mut tape, pred, &batch.labels)?;
            Some(tape.scale(l, config.loss_weight))
        } else {
            None
        };
        let reg = phi.regularizer(&mut tape, &pp, x, z)?;
        let total = match (decision, reg) {
            (Some(d), Some(r)) => tape.add(d, r)?,
            (Some(d), None) => d,
            (None, Some(r)) => r,
            (None, None) => return Err(Error::Config("embedding objective is empty".into())),
        };

        let value = |v: Option<crate::tape::Var>| v.map_or(0.0, |v| tape.value(v).data()[0]);
        let entry = EpochLoss {
            total: tape.value(total).data()[0],
            decision: value(decision),
            regularizer: value(reg),
        };
        if !entry.total.is_finite() {
            return Err(Error::EmbeddingDiverged {
                round,
                epoch,
                loss: entry.total,
            });
        }
        losses.push(entry);
        let grads = tape.backward(total)?;
        let g = param_grads(&tape, &grads, &pp);
        opt.step(phi.params_mut(), &g);
    }

    let mut epochs_kept = config.epochs_embed;
    let mut stop = None;
    if let Some(p) = blr {
        trajectory.push(probe_features(phi, proxy, p)?);
        snapshots.push(phi.params().into_iter().cloned().collect());
        if trajectory.len() >= 2 {
            let s = blr_early_stop(
                &trajectory,
                &p.targets,
                &config.blr_stop,
                config.epochs_embed,
            )?;
            if let Some(c) = s.checkpoint {
                for (dst, src) in phi.params_mut().into_iter().zip(&snapshots[c]) {
                    *dst = src.clone();
                }
                epochs_kept = s.epoch;
            }
            stop = Some(s);
        }
    }

    Ok(EmbedReport {
        losses,
        epochs_kept,
        blr: stop,
    })
}
