//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::histogram::BinGrid;
use crate::loanrep::{avatar_proxy, AvatarEmbedding};
use crate::mom::{Embedding, Proxy};
use crate::nn::{Activation, Layer, LossKind, Network};
use crate::pointcloud::{HistogramProxy, ProjectionEmbedding};
use crate::sideinfo::{AdviceEmbedding, SwitchProxy, INPUT_WIDTH};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Step used by [`suite`].
pub const SUITE_EPS: f64 = 1e-5;

/// Denominator floor for the relative error, so that two gradients which are
/// both ~0 do not blow the ratio up.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of the scalar `f(leaves)` w.r.t. every entry of
/// every tensor in `at` against central differences with step `eps`.
/// Returns the worst relative error (0 when there is nothing to check).
pub fn check<F>(f: F, at: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert!(eps > 0.0 && eps <= 1e-2, "eps must lie in (0, 1e-2]");
    let mut tape = Tape::new();
    let leaves: Vec<Var> = at.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    let grads = tape.backward(out)?;

    let eval = |point: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let l: Vec<Var> = point.iter().map(|p| t.leaf(p.clone())).collect();
        let o = f(&mut t, &l)?;
        Ok(t.value(o).data()[0])
    };

    let mut worst = 0.0_f64;
    let mut point = at.to_vec();
    for (k, &leaf) in leaves.iter().enumerate() {
        let analytic = grads.wrt(&tape, leaf);
        for j in 0..at[k].len() {
            let orig = point[k].data()[j];
            point[k].data_mut()[j] = orig + eps;
            let plus = eval(&point)?;
            point[k].data_mut()[j] = orig - eps;
            let minus = eval(&point)?;
            point[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}

/// Checks every parameter of `net` on `input` with the loss `0.5 * sum(out^2)`.
pub fn grad_check(net: &Network, input: &Tensor, eps: f64) -> Result<f64> {
    if net.param_count() == 0 {
        return Ok(0.0);
    }
    let x = input.clone();
    check(
        |tape, params| {
            let xv = tape.leaf(x.clone());
            let out = net.apply(tape, params, xv)?;
            let sq = tape.square(out);
            let s = tape.sum(sq);
            Ok(tape.scale(s, 0.5))
        },
        net.params(),
        eps,
    )
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("matching length")
}

fn random_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect()
}

/// Checks parameters and input of `net` with the loss `0.5 * sum(out^2)`.
fn net_and_input(net: &Network, input: Tensor, eps: f64) -> Result<f64> {
    let k = net.params().len();
    let mut at = net.params().to_vec();
    at.push(input);
    check(
        |tape, l| {
            let out = net.apply(tape, &l[..k], l[k])?;
            let sq = tape.square(out);
            let s = tape.sum(sq);
            Ok(tape.scale(s, 0.5))
        },
        &at,
        eps,
    )
}

/// Gradient of `loss(proxy(phi(x)), y) + regularizer` w.r.t. the parameters
/// of both `phi` and the proxy.
fn pipeline<E: Embedding, P: Proxy>(
    phi: &E,
    proxy: &P,
    x: &Tensor,
    y: &[f64],
    loss: LossKind,
    eps: f64,
) -> Result<f64> {
    let k = phi.params().len();
    let at: Vec<Tensor> = phi
        .params()
        .into_iter()
        .chain(proxy.params())
        .cloned()
        .collect();
    check(
        |tape, l| {
            let xv = tape.leaf(x.clone());
            let z = phi.embed(tape, &l[..k], xv)?;
            let out = proxy.predict(tape, &l[k..], z)?;
            let lv = loss.apply(tape, out, y)?;
            match phi.regularizer(tape, &l[..k], xv, z)? {
                Some(r) => tape.add(lv, r),
                None => Ok(lv),
            }
        },
        &at,
        eps,
    )
}

/// Worst relative error of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub name: String,
    pub error: f64,
}

/// Every layer type, the loss heads, the soft histogram and the three
/// experiment pipelines, with random shapes and values drawn from `seed`.
pub fn suite(seed: u64) -> Result<Vec<SuiteCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = SUITE_EPS;
    let mut out = Vec::new();
    let mut push = |name: &str, error: f64| {
        out.push(SuiteCase {
            name: name.to_string(),
            error,
        })
    };

    let (din, dout, n) = (
        rng.random_range(1..6),
        rng.random_range(1..6),
        rng.random_range(1..5),
    );
    let net = Network::new(vec![din], vec![Layer::dense(din, dout)], &mut rng)?;
    push(
        "dense",
        net_and_input(&net, random(&[n, din], &mut rng), eps)?,
    );
    let net = Network::new(vec![din], vec![Layer::dense_no_bias(din, dout)], &mut rng)?;
    push(
        "dense_no_bias",
        net_and_input(&net, random(&[n, din], &mut rng), eps)?,
    );
    for (name, f) in [
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
        ("relu", Activation::Relu),
    ] {
        let net = Network::new(
            vec![din],
            vec![Layer::dense(din, dout), Layer::act(f)],
            &mut rng,
        )?;
        push(name, net_and_input(&net, random(&[n, din], &mut rng), eps)?);
    }
    let (cin, cout) = (rng.random_range(1..3), rng.random_range(1..4));
    let net = Network::new(vec![cin, 6, 6], vec![Layer::conv3x3(cin, cout)], &mut rng)?;
    push(
        "conv2d",
        net_and_input(&net, random(&[2, cin, 6, 6], &mut rng), eps)?,
    );
    let net = Network::new(
        vec![cin, 6, 6],
        vec![Layer::MaxPool2d { size: 2 }],
        &mut rng,
    )?;
    push(
        "maxpool2d",
        net_and_input(&net, random(&[2, cin, 6, 6], &mut rng), eps)?,
    );
    let net = Network::new(
        vec![1, 6, 6],
        vec![
            Layer::conv3x3(1, 3),
            Layer::MaxPool2d { size: 2 },
            Layer::dense(12, 1),
            Layer::act(Activation::Sigmoid),
        ],
        &mut rng,
    )?;
    push(
        "conv_pool_dense",
        net_and_input(&net, random(&[3, 1, 6, 6], &mut rng), eps)?,
    );

    let pred = random(&[n, 1], &mut rng).map(|v| 0.1 + 0.4 * (v + 1.0));
    let target: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    for (name, loss) in [("bce", LossKind::Bce), ("mse", LossKind::Mse)] {
        push(
            name,
            check(
                |tape, l| loss.apply(tape, l[0], &target),
                std::slice::from_ref(&pred),
                eps,
            )?,
        );
    }

    let m = rng.random_range(3..12);
    let points = random(&[2, m, 2], &mut rng).map(|v| 1.6 * v);
    let weights = random(&[2, 1, 6, 6], &mut rng);
    let bandwidth = rng.random_range(0.3..1.0);
    push(
        "soft_histogram",
        check(
            |tape, l| {
                let h = tape.soft_histogram(l[0], BinGrid::default(), bandwidth)?;
                let w = tape.leaf(weights.clone());
                let p = tape.mul(h, w)?;
                Ok(tape.sum(p))
            },
            &[points],
            eps,
        )?,
    );

    let (p, m) = (3, 10);
    let phi = ProjectionEmbedding::new(&random(&[p, p], &mut rng), m, 1.0)?;
    let proxy = HistogramProxy::new(m, 0.5, &mut rng)?;
    let x = random(&[4, m * p], &mut rng).map(|v| 1.5 * v);
    let y = random_labels(4, &mut rng);
    push(
        "pointcloud_pipeline",
        pipeline(&phi, &proxy, &x, &y, LossKind::Bce, eps)?,
    );

    let phi = AdviceEmbedding::new(1.0, &mut rng)?;
    let proxy = SwitchProxy::new(&mut rng)?;
    let x = random(&[5, INPUT_WIDTH], &mut rng);
    let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..3.0)).collect();
    push(
        "sideinfo_pipeline",
        pipeline(&phi, &proxy, &x, &y, LossKind::Mse, eps)?,
    );

    let d = rng.random_range(2..8);
    let phi = AvatarEmbedding::new(d, 6, rng.random_range(0.0..1.0), 1.0, &mut rng)?;
    let proxy = avatar_proxy(&mut rng)?;
    let x = random(&[5, d], &mut rng);
    let y = random_labels(5, &mut rng);
    push(
        "loanrep_pipeline",
        pipeline(&phi, &proxy, &x, &y, LossKind::Bce, eps)?,
    );

    Ok(out)
}
