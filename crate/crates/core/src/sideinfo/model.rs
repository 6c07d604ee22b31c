use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::LinearModel;
use super::data::Sample;
use crate::error::Result;
use crate::mom::{Embedding, Proxy};
use crate::nn::{Activation, Layer, Network};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Width of a raw input row: the four features followed by the outcome.
pub const INPUT_WIDTH: usize = 5;
/// Width of a representation row: features, outcome, weights.
pub const Z_WIDTH: usize = 9;

/// Raw rows `[x_i, x_r, x_c, x_d, y]`.
pub fn input_rows(samples: &[Sample]) -> Tensor {
    let rows: Vec<[f64; INPUT_WIDTH]> = samples
        .iter()
        .map(|s| {
            let x = s.xf();
            [x[0], x[1], x[2], x[3], f64::from(s.y)]
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// `phi`: one bias-free linear layer fed the constant 1, emitting the four
/// advice weights. Representations append them to the raw row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdviceEmbedding {
    pub net: Network,
}

impl AdviceEmbedding {
    /// Weights drawn from `U(-scale, scale)`.
    pub fn new<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Network::zeros(vec![1], vec![Layer::dense_no_bias(1, 4)])?;
        if scale > 0.0 {
            for v in net.params_mut()[0].data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        Ok(Self { net })
    }

    pub fn model(&self) -> LinearModel {
        let p = self.net.params()[0].data();
        LinearModel {
            bias: 0.0,
            w: [p[0], p[1], p[2], p[3]],
        }
    }
}

impl Embedding for AdviceEmbedding {
    fn params(&self) -> Vec<&Tensor> {
        self.net.params().iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut().iter_mut().collect()
    }

    fn embed(&self, tape: &mut Tape, params: &[Var], inputs: Var) -> Result<Var> {
        let n = tape.value(inputs).rows();
        let one = tape.leaf(Tensor::filled(&[1, 1], 1.0));
        let coef = self.net.apply(tape, params, one)?;
        let rows = tape.broadcast_rows(coef, n)?;
        tape.concat_columns(inputs, rows)
    }
}

/// `h-hat(z) = w.x + sigmoid(a.w + c) * (v0 y + v.x)`: the advice as
/// shown plus a learned estimate of how much side information the decision
/// maker adds, gated by the advice weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchProxy {
    /// `[y, x] -> s-hat`, no bias.
    pub side: Network,
    /// `w -> switch`, logistic.
    pub gate: Network,
}

impl SwitchProxy {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        Ok(Self {
            side: Network::new(vec![5], vec![Layer::dense_no_bias(5, 1)], rng)?,
            gate: Network::new(
                vec![4],
                vec![Layer::dense(4, 1), Layer::act(Activation::Sigmoid)],
                rng,
            )?,
        })
    }

    /// `(v, [a, c])`.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.side.params()[0].data().to_vec(),
            self.gate.params()[0].data().to_vec(),
        )
    }

    fn parts(&self, tape: &mut Tape, z: Var) -> Result<[Var; 3]> {
        Ok([
            tape.select_columns(z, &[0, 1, 2, 3])?,
            tape.select_columns(z, &[4, 0, 1, 2, 3])?,
            tape.select_columns(z, &[5, 6, 7, 8])?,
        ])
    }
}

impl Proxy for SwitchProxy {
    fn params(&self) -> Vec<&Tensor> {
        self.side
            .params()
            .iter()
            .chain(self.gate.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.side
            .params_mut()
            .iter_mut()
            .chain(self.gate.params_mut().iter_mut())
            .collect()
    }

    fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let seed: u64 = rng.random();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        self.side.reinitialize(&mut r);
        self.gate.reinitialize(&mut r);
    }

    fn predict_transformed(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var> {
        let [x, yx, w] = self.parts(tape, z)?;
        let wx = tape.mul(x, w)?;
        let advice = tape.row_sums(wx)?;
        let s_hat = self.side.apply(tape, &params[..1], yx)?;
        let gate = self.gate.apply(tape, &params[1..], w)?;
        let used = tape.mul(gate, s_hat)?;
        tape.add(advice, used)
    }

    /// Inputs of the side-information unit.
    fn features(&self, tape: &mut Tape, _params: &[Var], z: Var) -> Result<Var> {
        tape.select_columns(z, &[4, 0, 1, 2, 3])
    }
}
