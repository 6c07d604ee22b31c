use mom_core::gradcheck::{check, grad_check, suite};
use mom_core::nn::{Activation, Layer, Network};
use mom_core::tape::Tape;
use mom_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_case_within_tolerance_on_twenty_seeds() {
    for seed in 0..20 {
        for case in suite(seed).unwrap() {
            assert!(
                case.error <= 1e-4,
                "seed {seed} {}: {:.3e}",
                case.name,
                case.error
            );
        }
    }
}

#[test]
fn suite_covers_layers_histogram_and_pipelines() {
    let names: Vec<String> = suite(0).unwrap().into_iter().map(|c| c.name).collect();
    for expected in [
        "dense",
        "sigmoid",
        "tanh",
        "relu",
        "conv2d",
        "maxpool2d",
        "soft_histogram",
        "pointcloud_pipeline",
        "sideinfo_pipeline",
        "loanrep_pipeline",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
}

#[test]
fn network_backward_matches_tape_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Network::new(
        vec![4],
        vec![
            Layer::dense(4, 5),
            Layer::act(Activation::Tanh),
            Layer::dense(5, 2),
        ],
        &mut rng,
    )
    .unwrap();
    let x = Tensor::from_rows(&[[0.1, -0.4, 0.3, 0.9], [-0.7, 0.2, 0.5, -0.1]]);
    assert!(grad_check(&net, &x, 1e-5).unwrap() <= 1e-4);

    // backward with dL/dout = out is the gradient of 0.5 * sum(out^2)
    let out = net.forward(&x).unwrap();
    let grads = net.backward(&out).unwrap();
    for (g, p) in grads.iter().zip(net.params()) {
        assert_eq!(g.shape(), p.shape());
    }
    let h = 1e-6;
    let loss = |n: &Network| {
        0.5 * n
            .predict(&x)
            .unwrap()
            .data()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
    };
    let mut bumped = net.clone();
    bumped.params_mut()[0].data_mut()[2] += h;
    let numeric = (loss(&bumped) - loss(&net)) / h;
    assert!((numeric - grads[0].data()[2]).abs() < 1e-4);
}

#[test]
fn constant_loss_has_zero_gradients() {
    let w = Tensor::from_rows(&[[0.3, -2.0]]);
    let mut tape = Tape::new();
    let v = tape.leaf(w);
    let z = tape.scale(v, 0.0);
    let s = tape.sum(z);
    let out = tape.offset(s, 4.0);
    let g = tape.backward(out).unwrap();
    assert!(g.wrt(&tape, v).data().iter().all(|&x| x == 0.0));
}

#[test]
fn maxpool_routes_incoming_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::new(vec![2, 4, 4], vec![Layer::MaxPool2d { size: 2 }], &mut rng).unwrap();
    let x = Tensor::new(
        vec![1, 2, 4, 4],
        (0..32).map(|i| ((i * 37) % 17) as f64).collect(),
    )
    .unwrap();
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = net.apply(&mut tape, &[], xv).unwrap();
    let upstream = Tensor::new(
        vec![1, 2, 2, 2],
        vec![1.0, -2.0, 0.5, 3.0, 0.25, 1.5, -1.0, 2.0],
    )
    .unwrap();
    let g = tape
        .backward_with(y, upstream.clone())
        .unwrap()
        .wrt(&tape, xv);
    assert!((g.sum() - upstream.sum()).abs() < 1e-12);
    let nonzero = g.data().iter().filter(|v| **v != 0.0).count();
    assert_eq!(nonzero, 8);
    for (i, &gv) in g.data().iter().enumerate() {
        if gv != 0.0 {
            let (c, r, col) = (i / 16, (i % 16) / 4, i % 4);
            let (r0, c0) = (r / 2 * 2, col / 2 * 2);
            let max = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| x.data()[c * 16 + (r0 + a) * 4 + c0 + b])
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(x.data()[i], max);
        }
    }
}

#[test]
fn check_detects_a_wrong_gradient() {
    // relu at its kink: one-sided tape gradient vs symmetric difference
    let err = check(
        |tape, l| {
            let r = tape.relu(l[0]);
            Ok(tape.sum(r))
        },
        &[Tensor::vector(vec![0.0])],
        1e-5,
    )
    .unwrap();
    assert!(err > 0.1);
}
