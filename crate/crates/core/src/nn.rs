//! Feed-forward networks built from a fixed set of layer types.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Optimizer;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

pub const NETWORK_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    MaxPool2d {
        size: usize,
    },
    Activation {
        function: Activation,
    },
}

impl Layer {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Layer::Dense {
            inputs,
            outputs,
            bias: true,
        }
    }

    pub fn dense_no_bias(inputs: usize, outputs: usize) -> Self {
        Layer::Dense {
            inputs,
            outputs,
            bias: false,
        }
    }

    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
        }
    }

    pub fn act(function: Activation) -> Self {
        Layer::Activation { function }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Activation { .. } => "activation",
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Dense {
                inputs,
                outputs,
                bias,
            } => inputs * outputs + if bias { outputs } else { 0 },
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => out_channels * in_channels * kernel * kernel + out_channels,
            _ => 0,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            Layer::Dense {
                inputs, outputs, ..
            } => (inputs, outputs),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => (
                in_channels * kernel * kernel,
                out_channels * kernel * kernel,
            ),
            _ => (0, 0),
        }
    }

    /// Per-sample output shape, or `None` when `input` does not fit.
    fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match *self {
            Layer::Dense {
                inputs, outputs, ..
            } => (input.iter().product::<usize>() == inputs).then(|| vec![outputs]),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => match input {
                [c, h, w] if *c == in_channels && *h >= kernel && *w >= kernel => {
                    Some(vec![out_channels, h - kernel + 1, w - kernel + 1])
                }
                _ => None,
            },
            Layer::MaxPool2d { size } => match input {
                [c, h, w] if *h >= size && *w >= size => Some(vec![*c, h / size, w / size]),
                _ => None,
            },
            Layer::Activation { .. } => Some(input.to_vec()),
        }
    }

    fn expected_input(&self) -> Vec<usize> {
        match *self {
            Layer::Dense { inputs, .. } => vec![inputs],
            Layer::Conv2d {
                in_channels,
                kernel,
                ..
            } => vec![in_channels, kernel, kernel],
            Layer::MaxPool2d { size } => vec![0, size, size],
            Layer::Activation { .. } => vec![],
        }
    }
}

/// What a single forward pass left behind for [`Network::backward`].
#[derive(Debug)]
struct Recording {
    tape: Tape,
    params: Vec<Var>,
    output: Var,
}

/// A feed-forward network with one flat parameter tensor per layer
/// (empty for parameter-free layers).
#[derive(Debug, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<Tensor>,
    recording: Option<Recording>,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            params: self.params.clone(),
            recording: None,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.layers == other.layers
            && self.params == other.params
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    version: u32,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<Vec<f64>>,
}

impl From<Network> for NetworkDoc {
    fn from(n: Network) -> Self {
        NetworkDoc {
            version: NETWORK_DOC_VERSION,
            input_shape: n.input_shape,
            layers: n.layers,
            params: n.params.into_iter().map(Tensor::into_data).collect(),
        }
    }
}

impl TryFrom<NetworkDoc> for Network {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        if doc.version != NETWORK_DOC_VERSION {
            return Err(Error::Version(doc.version));
        }
        let mut net = Network::zeros(doc.input_shape, doc.layers)?;
        if doc.params.len() != net.params.len() {
            return Err(Error::Config(format!(
                "{} parameter arrays for {} layers",
                doc.params.len(),
                net.layers.len()
            )));
        }
        for (i, data) in doc.params.into_iter().enumerate() {
            net.params[i] = Tensor::new(vec![net.layers[i].param_count()], data)?;
        }
        Ok(net)
    }
}

impl Network {
    /// Builds a network with all-zero parameters after checking that the
    /// layer shapes compose starting from the per-sample `input_shape`.
    pub fn zeros(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .ok_or_else(|| Error::LayerShape {
                    layer: i,
                    kind: layer.kind().into(),
                    expected: layer.expected_input(),
                    got: shape.clone(),
                })?;
        }
        let params = layers
            .iter()
            .map(|l| Tensor::zeros(&[l.param_count()]))
            .collect();
        Ok(Self {
            input_shape,
            layers,
            params,
            recording: None,
        })
    }

    /// Builds a network with weights drawn from `U(-a, a)`,
    /// `a = sqrt(6 / (fan_in + fan_out))`, and zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_shape, layers)?;
        net.reinitialize(rng);
        Ok(net)
    }

    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (layer, p) in self.layers.iter().zip(self.params.iter_mut()) {
            let (fan_in, fan_out) = layer.fans();
            let n_bias = match *layer {
                Layer::Dense {
                    outputs,
                    bias: true,
                    ..
                } => outputs,
                Layer::Conv2d { out_channels, .. } => out_channels,
                _ => 0,
            };
            let n_weights = p.len() - n_bias;
            let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                *x = if j < n_weights {
                    rng.random_range(-a..a)
                } else {
                    0.0
                };
            }
        }
        self.recording = None;
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers.iter().fold(self.input_shape.clone(), |s, l| {
            l.output_shape(&s).expect("validated at construction")
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.recording = None;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Puts the parameters on `tape` as leaves.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Runs layers `range` on `x` using the given parameter leaves.
    pub fn apply_range(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        range: std::ops::Range<usize>,
    ) -> Result<Var> {
        let mut h = x;
        for i in range {
            let layer = &self.layers[i];
            let wrap = |e: Error, got: Vec<usize>| match e {
                Error::Shape { .. } => Error::LayerShape {
                    layer: i,
                    kind: layer.kind().into(),
                    expected: layer.expected_input(),
                    got,
                },
                other => other,
            };
            let have = params.get(i).map_or(0, |&p| tape.value(p).len());
            if have != layer.param_count() {
                return Err(Error::Shape {
                    op: "layer parameters",
                    detail: format!(
                        "layer {i} ({}) expects {} parameters, got {have}",
                        layer.kind(),
                        layer.param_count()
                    ),
                });
            }
            let got = tape.value(h).shape().to_vec();
            h = match *layer {
                Layer::Dense {
                    inputs,
                    outputs,
                    bias,
                } => tape.dense(h, params[i], inputs, outputs, bias),
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => tape.conv2d(h, params[i], in_channels, out_channels, kernel),
                Layer::MaxPool2d { size } => tape.maxpool2d(h, size),
                Layer::Activation { function } => Ok(match function {
                    Activation::Sigmoid => tape.sigmoid(h),
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                }),
            }
            .map_err(|e| wrap(e, got))?;
        }
        Ok(h)
    }

    /// Runs the whole network on a batch `x` of shape `(batch, input_shape..)`.
    pub fn apply(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let got = tape.value(x).shape().to_vec();
        if got.len() != self.input_shape.len() + 1 || got[1..] != self.input_shape[..] {
            return Err(Error::LayerShape {
                layer: 0,
                kind: self.layers.first().map_or("input", Layer::kind).into(),
                expected: self.input_shape.clone(),
                got,
            });
        }
        self.apply_range(tape, params, x, 0..self.layers.len())
    }

    /// Index of the layer that produces the last-layer features: everything
    /// before the final dense layer.
    pub fn feature_layers(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Dense { .. }))
            .unwrap_or(self.layers.len())
    }

    /// Forward pass that records the graph for a later [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.leaves(&mut tape);
        let x = tape.leaf(input.clone());
        let output = self.apply(&mut tape, &params, x)?;
        let out = tape.value(output).clone();
        self.recording = Some(Recording {
            tape,
            params,
            output,
        });
        Ok(out)
    }

    /// Forward pass without recording.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.leaves(&mut tape);
        let x = tape.leaf(input.clone());
        let out = self.apply(&mut tape, &params, x)?;
        Ok(tape.value(out).clone())
    }

    /// Gradients of the recorded forward pass given `d loss / d output`.
    pub fn backward(&self, loss_grad: &Tensor) -> Result<Vec<Tensor>> {
        let rec = self.recording.as_ref().ok_or(Error::NotForwarded)?;
        let grads = rec.tape.backward_with(rec.output, loss_grad.clone())?;
        Ok(param_grads(&rec.tape, &grads, &rec.params))
    }

    /// One optimizer step on `(inputs, targets)`; returns the pre-update loss.
    pub fn train_step(
        &mut self,
        optimizer: &mut Optimizer,
        inputs: &Tensor,
        targets: &[f64],
        loss: LossKind,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let params = self.leaves(&mut tape);
        let x = tape.leaf(inputs.clone());
        let out = self.apply(&mut tape, &params, x)?;
        let l = loss.apply(&mut tape, out, targets)?;
        let value = tape.value(l).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: optimizer.steps(),
            });
        }
        let grads = tape.backward(l)?;
        let g = param_grads(&tape, &grads, &params);
        optimizer.step(self.params_mut().iter_mut().collect(), &g);
        Ok(value)
    }
}

pub fn param_grads(tape: &Tape, grads: &Gradients, params: &[Var]) -> Vec<Tensor> {
    params.iter().map(|&p| grads.wrt(tape, p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Bce,
}

impl LossKind {
    pub fn apply(self, tape: &mut Tape, pred: Var, targets: &[f64]) -> Result<Var> {
        match self {
            LossKind::Mse => tape.mse(pred, targets),
            LossKind::Bce => tape.bce(pred, targets),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_sigmoid(w: f64, b: f64) -> Network {
        let mut n = Network::zeros(
            vec![1],
            vec![Layer::dense(1, 1), Layer::act(Activation::Sigmoid)],
        )
        .unwrap();
        n.params_mut()[0] = Tensor::vector(vec![w, b]);
        n
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut n = Network::zeros(vec![3], vec![Layer::dense_no_bias(3, 2)]).unwrap();
        let y = n.forward(&Tensor::from_rows(&[[1.0, 1.0, 1.0]])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn dense_then_sigmoid_closed_form() {
        let mut n = dense_sigmoid(2.0, 1.0);
        let y = n.forward(&Tensor::from_rows(&[[0.0]])).unwrap();
        assert!((y.data()[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn conv_pool_shape_arithmetic() {
        // 6x6 -> conv3x3 (valid) -> 4x4 -> pool2x2 -> 2x2, 3 channels
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n = Network::new(
            vec![1, 6, 6],
            vec![Layer::conv3x3(1, 3), Layer::MaxPool2d { size: 2 }],
            &mut rng,
        )
        .unwrap();
        assert_eq!(n.output_shape(), vec![3, 2, 2]);
        let y = n.forward(&Tensor::zeros(&[2, 1, 6, 6])).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 2]);
    }

    #[test]
    fn mismatched_layers_are_rejected_with_layer_index() {
        let err =
            Network::zeros(vec![4], vec![Layer::dense(4, 3), Layer::dense(2, 1)]).unwrap_err();
        match err {
            Error::LayerShape { layer, .. } => assert_eq!(layer, 1),
            e => panic!("unexpected {e}"),
        }
        let mut n = Network::zeros(vec![4], vec![Layer::dense(4, 3)]).unwrap();
        assert!(matches!(
            n.forward(&Tensor::zeros(&[1, 5])),
            Err(Error::LayerShape { layer: 0, .. })
        ));
    }

    #[test]
    fn param_count_matches_layers() {
        let n = Network::zeros(
            vec![1, 6, 6],
            vec![
                Layer::conv3x3(1, 3),
                Layer::MaxPool2d { size: 2 },
                Layer::dense(12, 1),
                Layer::act(Activation::Sigmoid),
            ],
        )
        .unwrap();
        assert_eq!(n.param_count(), 3 * 9 + 3 + 12 + 1);
    }

    #[test]
    fn backward_requires_forward() {
        let n = dense_sigmoid(1.0, 0.0);
        assert!(matches!(
            n.backward(&Tensor::scalar(1.0)),
            Err(Error::NotForwarded)
        ));
    }

    #[test]
    fn perfect_predictor_has_zero_mse_and_no_update() {
        let mut n = Network::zeros(vec![1], vec![Layer::dense(1, 1)]).unwrap();
        n.params_mut()[0] = Tensor::vector(vec![2.0, 1.0]);
        let x = Tensor::from_rows(&[[0.0], [1.0], [2.0]]);
        let before = n.params().to_vec();
        let mut opt = Optimizer::sgd(0.1);
        let loss = n
            .train_step(&mut opt, &x, &[1.0, 3.0, 5.0], LossKind::Mse)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(n.params(), &before[..]);
    }

    #[test]
    fn non_finite_loss_reports_step() {
        let mut n = Network::zeros(vec![1], vec![Layer::dense(1, 1)]).unwrap();
        let mut opt = Optimizer::sgd(0.1);
        let x = Tensor::from_rows(&[[f64::NAN]]);
        assert!(matches!(
            n.train_step(&mut opt, &x, &[0.0], LossKind::Mse),
            Err(Error::NonFiniteLoss { step: 0 })
        ));
    }

    #[test]
    fn json_document_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Network::new(
            vec![2],
            vec![Layer::dense(2, 3), Layer::act(Activation::Tanh)],
            &mut rng,
        )
        .unwrap();
        let s = serde_json::to_string(&n).unwrap();
        assert!(s.contains("\"version\":1"));
        let back: Network = serde_json::from_str(&s).unwrap();
        assert_eq!(back, n);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }
}
