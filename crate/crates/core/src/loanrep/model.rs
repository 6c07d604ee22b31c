use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mom::{leaves, Embedding};
use crate::nn::{Activation, Layer, Network};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Output range of an avatar channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRange {
    /// `(-1, 1)` through tanh.
    Bipolar,
    /// `(0, 1)` through a logistic sigmoid.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: &'static str,
    pub range: ChannelRange,
}

const fn ch(name: &'static str, range: ChannelRange) -> Channel {
    Channel { name, range }
}

pub const Z_DIM: usize = 11;

/// Happiness and sadness are separate channels, as are surprise that may
/// accompany happiness and surprise that may accompany sadness.
pub const CHANNELS: [Channel; Z_DIM] = [
    ch("happiness", ChannelRange::Positive),
    ch("sadness", ChannelRange::Positive),
    ch("trustworthiness", ChannelRange::Bipolar),
    ch("dominance", ChannelRange::Bipolar),
    ch("hue", ChannelRange::Bipolar),
    ch("eye_gaze", ChannelRange::Bipolar),
    ch("age", ChannelRange::Bipolar),
    ch("anger", ChannelRange::Positive),
    ch("fear", ChannelRange::Positive),
    ch("happy_surprise", ChannelRange::Positive),
    ch("sad_surprise", ChannelRange::Positive),
];

pub const HAPPINESS: usize = 0;
pub const SADNESS: usize = 1;
pub const HAPPY_SURPRISE: usize = 9;
pub const SAD_SURPRISE: usize = 10;

/// Channel pairs that must not be active together.
pub const INCOMPATIBLE: [(usize, usize); 3] = [
    (HAPPINESS, SADNESS),
    (HAPPY_SURPRISE, SADNESS),
    (SAD_SURPRISE, HAPPINESS),
];

pub fn channel_index(name: &str) -> Option<usize> {
    CHANNELS.iter().position(|c| c.name == name)
}

/// Sum over incompatible pairs of the product of their activations.
pub fn constraint_penalty(z: &[f64]) -> f64 {
    INCOMPATIBLE
        .iter()
        .map(|&(a, b)| z[a].max(0.0) * z[b].max(0.0))
        .sum()
}

/// `phi`: standardized loan features through one relu hidden layer to 11
/// channel heads. It carries the decoder `psi` used for the reconstruction
/// term, whose parameters are trained alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarEmbedding {
    pub encoder: Network,
    pub decoder: Network,
    /// Weight of the decision loss; reconstruction gets `1 - alpha`.
    pub alpha: f64,
    pub constraint_weight: f64,
}

impl AvatarEmbedding {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        hidden: usize,
        alpha: f64,
        constraint_weight: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            encoder: Network::new(
                vec![inputs],
                vec![
                    Layer::dense(inputs, hidden),
                    Layer::act(Activation::Relu),
                    Layer::dense(hidden, Z_DIM),
                ],
                rng,
            )?,
            decoder: Network::new(
                vec![Z_DIM],
                vec![
                    Layer::dense(Z_DIM, hidden),
                    Layer::act(Activation::Relu),
                    Layer::dense(hidden, inputs),
                ],
                rng,
            )?,
            alpha,
            constraint_weight,
        })
    }

    pub fn inputs(&self) -> usize {
        self.encoder.input_shape()[0]
    }

    fn encoder_len(&self) -> usize {
        self.encoder.params().len()
    }

    /// Representations of the rows of `x`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = leaves(&mut tape, self.encoder.params().iter().collect());
        let xv = tape.leaf(x.clone());
        let z = self.heads(&mut tape, &p, xv)?;
        Ok(tape.value(z).clone())
    }

    /// `psi(phi(x))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decoder.predict(&self.encode(x)?)
    }

    /// Mean over rows of `||x - psi(phi(x))||^2`.
    pub fn reconstruction_mse(&self, x: &Tensor) -> Result<f64> {
        reconstruction_loss(&self.decoder, self, x)
    }

    fn heads(&self, tape: &mut Tape, enc: &[Var], x: Var) -> Result<Var> {
        let a = self.encoder.apply(tape, enc, x)?;
        let t = tape.tanh(a);
        let s = tape.sigmoid(a);
        let mask = |range| {
            let mut m = Tensor::zeros(&[Z_DIM, Z_DIM]);
            for (i, c) in CHANNELS.iter().enumerate() {
                if c.range == range {
                    m.data_mut()[i * Z_DIM + i] = 1.0;
                }
            }
            m
        };
        let mt = tape.leaf(mask(ChannelRange::Bipolar));
        let ms = tape.leaf(mask(ChannelRange::Positive));
        let zt = tape.matmul(t, mt)?;
        let zs = tape.matmul(s, ms)?;
        tape.add(zt, zs)
    }

    fn constraint_var(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let n = tape.value(z).rows().max(1);
        let left: Vec<usize> = INCOMPATIBLE.iter().map(|p| p.0).collect();
        let right: Vec<usize> = INCOMPATIBLE.iter().map(|p| p.1).collect();
        let a = tape.select_columns(z, &left)?;
        let b = tape.select_columns(z, &right)?;
        let prod = tape.mul(a, b)?;
        let total = tape.sum(prod);
        Ok(tape.scale(total, 1.0 / n as f64))
    }

    fn reconstruction_var(&self, tape: &mut Tape, dec: &[Var], x: Var, z: Var) -> Result<Var> {
        let n = tape.value(x).rows().max(1);
        let xhat = self.decoder.apply(tape, dec, z)?;
        let d = tape.sub(x, xhat)?;
        let sq = tape.square(d);
        let total = tape.sum(sq);
        Ok(tape.scale(total, 1.0 / n as f64))
    }
}

impl Embedding for AvatarEmbedding {
    fn params(&self) -> Vec<&Tensor> {
        self.encoder
            .params()
            .iter()
            .chain(self.decoder.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .params_mut()
            .iter_mut()
            .chain(self.decoder.params_mut().iter_mut())
            .collect()
    }

    fn embed(&self, tape: &mut Tape, params: &[Var], inputs: Var) -> Result<Var> {
        self.heads(tape, &params[..self.encoder_len()], inputs)
    }

    /// `(1 - alpha) * reconstruction + constraint_weight * constraint`.
    fn regularizer(
        &self,
        tape: &mut Tape,
        params: &[Var],
        inputs: Var,
        z: Var,
    ) -> Result<Option<Var>> {
        let mut terms = Vec::new();
        if self.alpha < 1.0 {
            let r = self.reconstruction_var(tape, &params[self.encoder_len()..], inputs, z)?;
            terms.push(tape.scale(r, 1.0 - self.alpha));
        }
        if self.constraint_weight > 0.0 {
            let c = self.constraint_var(tape, z)?;
            terms.push(tape.scale(c, self.constraint_weight));
        }
        let mut it = terms.into_iter();
        let Some(mut acc) = it.next() else {
            return Ok(None);
        };
        for t in it {
            acc = tape.add(acc, t)?;
        }
        Ok(Some(acc))
    }
}

/// Mean over rows of `||x - psi(phi(x))||^2` for an arbitrary decoder.
pub fn reconstruction_loss(psi: &Network, phi: &AvatarEmbedding, x: &Tensor) -> Result<f64> {
    let xhat = psi.predict(&phi.encode(x)?)?;
    if xhat.shape() != x.shape() {
        return Err(Error::Shape {
            op: "reconstruction",
            detail: format!(
                "decoder output {:?} for inputs {:?}",
                xhat.shape(),
                x.shape()
            ),
        });
    }
    let n = x.rows().max(1) as f64;
    Ok(x.data()
        .iter()
        .zip(xhat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// `h-hat`: two relu layers of 20 units and a logistic approval head.
pub fn avatar_proxy<R: Rng + ?Sized>(rng: &mut R) -> Result<Network> {
    Network::new(
        vec![Z_DIM],
        vec![
            Layer::dense(Z_DIM, 20),
            Layer::act(Activation::Relu),
            Layer::dense(20, 20),
            Layer::act(Activation::Relu),
            Layer::dense(20, 1),
            Layer::act(Activation::Sigmoid),
        ],
        rng,
    )
}

/// Number of distinct representations after rounding to two decimals; a
/// small count signals collapse onto a few prototypes.
pub fn distinct_representations(z: &Tensor) -> usize {
    let mut seen = std::collections::HashSet::new();
    for i in 0..z.rows() {
        let key: Vec<i64> = z
            .row(i)
            .iter()
            .map(|v| (v * 100.0).round() as i64)
            .collect();
        seen.insert(key);
    }
    seen.len()
}
