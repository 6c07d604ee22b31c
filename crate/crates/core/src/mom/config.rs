use serde::{Deserialize, Serialize};

use crate::blr::BlrConfig;
use crate::error::{Error, Result};
use crate::nn::LossKind;

/// Per-round learning-rate schedule:
/// `lr = base * (1 + (1 - accuracy)) * decay^round` when `scale_with_error`,
/// otherwise `base * decay^round`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub scale_with_error: bool,
    pub decay: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            scale_with_error: true,
            decay: 0.9,
        }
    }
}

impl LrSchedule {
    pub fn factor(&self, accuracy: f64, round: usize) -> f64 {
        let err = if self.scale_with_error {
            1.0 + (1.0 - accuracy)
        } else {
            1.0
        };
        err * self.decay.powi(round as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub rounds: usize,
    pub queries_per_round: usize,
    pub epochs_proxy: usize,
    pub epochs_embed: usize,
    pub lr_proxy: f64,
    pub lr_embed: f64,
    pub lr_schedule: LrSchedule,
    pub reuse_previous_round: bool,
    pub l2_proxy: f64,
    /// Dropout applied to the proxy's transformed inputs while it is fitted.
    pub dropout_proxy: f64,
    pub restarts_proxy: usize,
    pub proxy_splits: usize,
    pub validation_fraction: f64,
    pub blr_stop: BlrConfig,
    /// Loss of both the proxy fit and the decision objective.
    pub loss: LossKind,
    /// Responses and labels above this value count as the positive action.
    pub decision_threshold: f64,
    /// Weight of the decision loss in the embedding objective.
    pub loss_weight: f64,
    /// Rows per embedding epoch; the whole dataset when `None`.
    pub embed_batch: Option<usize>,
    /// Leave the embedding untouched after a round with perfect responses.
    pub skip_embed_on_perfect: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            queries_per_round: 15,
            epochs_proxy: 500,
            epochs_embed: 300,
            lr_proxy: 0.07,
            lr_embed: 0.03,
            lr_schedule: LrSchedule::default(),
            reuse_previous_round: false,
            l2_proxy: 0.0,
            dropout_proxy: 0.0,
            restarts_proxy: 1,
            proxy_splits: 15,
            validation_fraction: 0.2,
            blr_stop: BlrConfig::default(),
            loss: LossKind::Bce,
            decision_threshold: 0.5,
            loss_weight: 1.0,
            embed_batch: None,
            skip_embed_on_perfect: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rounds < 1 || self.queries_per_round < 1 {
            return bad("rounds and queries_per_round must be at least 1");
        }
        if !(self.lr_proxy > 0.0 && self.lr_embed > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lr_schedule.decay > 0.0) {
            return bad("lr decay must be positive");
        }
        if self.restarts_proxy < 1 {
            return bad("restarts_proxy must be at least 1");
        }
        if self.proxy_splits < 1 {
            return bad("proxy_splits must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_proxy) {
            return bad("dropout_proxy must lie in [0, 1)");
        }
        if !(self.l2_proxy >= 0.0) {
            return bad("l2_proxy must be non-negative");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if !(self.loss_weight >= 0.0) {
            return bad("loss_weight must be non-negative");
        }
        if self.embed_batch == Some(0) {
            return bad("embed_batch must be positive");
        }
        if self.blr_stop.enabled && self.blr_stop.checkpoint_every == 0 {
            return bad("blr checkpoint cadence must be positive");
        }
        Ok(())
    }
}
