use mom_core::blr::{blr_early_stop, BlrConfig};
use mom_core::mom::{
    fit_proxy, init_computer_only, optimize_embedding, select_queries, ComputerOnlyConfig, Dataset,
    Embedding, LoopConfig, Record, Response, ResponseBuffer, RoundRecords, Session,
};
use mom_core::nn::{Activation, Layer, LossKind, Network};
use mom_core::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let labels = rows
        .iter()
        .map(|r| f64::from(r[0] + 0.5 * r[1] > 0.0))
        .collect();
    Dataset::new(Tensor::from_rows(&rows), labels).unwrap()
}

fn toy_session(seed: u64) -> Session<Network, Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = Network::new(vec![3], vec![Layer::dense(3, 2)], &mut rng).unwrap();
    let proxy = Network::new(
        vec![2],
        vec![Layer::dense(2, 1), Layer::act(Activation::Sigmoid)],
        &mut rng,
    )
    .unwrap();
    let config = LoopConfig {
        queries_per_round: 20,
        epochs_proxy: 60,
        epochs_embed: 40,
        proxy_splits: 3,
        restarts_proxy: 2,
        reuse_previous_round: true,
        ..LoopConfig::default()
    };
    Session::new(config, phi, proxy, seed).unwrap()
}

/// Simulated decision maker: approves when the first coordinate is positive.
fn answer(session: &mut Session<Network, Network>, data: &Dataset) -> Vec<Response> {
    session
        .issue_queries(data)
        .unwrap()
        .queries
        .iter()
        .map(|q| Response {
            id: q.id.clone(),
            value: f64::from(q.z[0] > 0.0),
        })
        .collect()
}

#[test]
fn identical_seeds_give_identical_histories() {
    let data = toy_data(200, 1);
    let run = || {
        let mut s = toy_session(7);
        for _ in 0..3 {
            let r = answer(&mut s, &data);
            s.run_round(&data, &r).unwrap();
        }
        (s.metrics.clone(), s.phi.params().to_vec())
    };
    assert_eq!(run(), run());
}

#[test]
fn replay_from_serialized_session_matches() {
    let data = toy_data(200, 2);
    let mut a = toy_session(3);
    let r0 = answer(&mut a, &data);
    a.run_round(&data, &r0).unwrap();
    let doc = serde_json::to_string(&a).unwrap();
    let mut b: Session<Network, Network> = serde_json::from_str(&doc).unwrap();
    for _ in 0..2 {
        let ra = answer(&mut a, &data);
        let rb = answer(&mut b, &data);
        assert_eq!(ra, rb);
        a.run_round(&data, &ra).unwrap();
        b.run_round(&data, &rb).unwrap();
    }
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.phi, b.phi);
    assert_eq!(a.metrics.len(), a.round);
}

#[test]
fn records_carry_the_parameters_that_produced_them() {
    let data = toy_data(100, 4);
    let mut s = toy_session(5);
    for _ in 0..2 {
        let r = answer(&mut s, &data);
        s.run_round(&data, &r).unwrap();
    }
    for round in &s.buffer.rounds {
        let mut phi = s.phi.clone();
        for (dst, src) in phi.params_mut().iter_mut().zip(&round.phi_params) {
            *dst = src.clone();
        }
        for rec in &round.records {
            let z = phi.predict(&data.inputs.select_rows(&[rec.index])).unwrap();
            assert_eq!(z.data(), rec.z.as_slice());
        }
    }
}

#[test]
fn unknown_query_is_named_and_state_kept() {
    let data = toy_data(100, 5);
    let mut s = toy_session(1);
    let mut r = answer(&mut s, &data);
    r[0].id = "bogus".into();
    let before = serde_json::to_string(&s).unwrap();
    match s.run_round(&data, &r) {
        Err(Error::UnknownQuery(ids)) => assert_eq!(ids, vec!["bogus".to_string()]),
        other => panic!("expected unknown query, got {other:?}"),
    }
    assert_eq!(serde_json::to_string(&s).unwrap(), before);
}

#[test]
fn contradictory_round_still_updates_embedding() {
    let inputs = Tensor::from_rows(&vec![[0.3, -0.2, 0.5]; 40]);
    let data = Dataset::new(inputs, (0..40).map(|i| f64::from(i % 2 == 0)).collect()).unwrap();
    let mut s = toy_session(11);
    let r: Vec<Response> = s
        .issue_queries(&data)
        .unwrap()
        .queries
        .iter()
        .enumerate()
        .map(|(k, q)| Response {
            id: q.id.clone(),
            value: f64::from(k % 2 == 0),
        })
        .collect();
    let before = s.phi.clone();
    let m = s.run_round(&data, &r).unwrap();
    assert!(
        (0.25..=0.75).contains(&m.proxy_validation_error),
        "{}",
        m.proxy_validation_error
    );
    assert!(m.embedding_updated);
    assert_ne!(before, s.phi);
}

#[test]
fn proxy_is_frozen_during_embedding_training() {
    let data = toy_data(100, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut phi = Network::new(vec![3], vec![Layer::dense(3, 2)], &mut rng).unwrap();
    let proxy = Network::new(
        vec![2],
        vec![Layer::dense(2, 1), Layer::act(Activation::Sigmoid)],
        &mut rng,
    )
    .unwrap();
    let snapshot = serde_json::to_vec(&proxy).unwrap();
    optimize_embedding(
        &mut phi,
        &proxy,
        &data,
        &LoopConfig::default(),
        0.03,
        None,
        0,
        &mut rng,
    )
    .unwrap();
    assert_eq!(serde_json::to_vec(&proxy).unwrap(), snapshot);
}

/// Embedding whose only objective is an L2 pull of its weights.
#[derive(Clone)]
struct Shrink(Network);

impl Embedding for Shrink {
    fn params(&self) -> Vec<&Tensor> {
        self.0.params().iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.0.params_mut().iter_mut().collect()
    }
    fn embed(
        &self,
        tape: &mut mom_core::tape::Tape,
        params: &[mom_core::tape::Var],
        inputs: mom_core::tape::Var,
    ) -> mom_core::Result<mom_core::tape::Var> {
        self.0.apply(tape, params, inputs)
    }
    fn regularizer(
        &self,
        tape: &mut mom_core::tape::Tape,
        params: &[mom_core::tape::Var],
        _inputs: mom_core::tape::Var,
        _z: mom_core::tape::Var,
    ) -> mom_core::Result<Option<mom_core::tape::Var>> {
        let sq = tape.square(params[0]);
        Ok(Some(tape.sum(sq)))
    }
}

#[test]
fn regularizer_only_objective_tracks_regularizer() {
    let data = toy_data(50, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut phi = Shrink(Network::new(vec![3], vec![Layer::dense(3, 2)], &mut rng).unwrap());
    let proxy = Network::new(
        vec![2],
        vec![Layer::dense(2, 1), Layer::act(Activation::Sigmoid)],
        &mut rng,
    )
    .unwrap();
    let config = LoopConfig {
        loss_weight: 0.0,
        epochs_embed: 50,
        ..LoopConfig::default()
    };
    let w0: f64 = phi.0.params()[0].data().iter().map(|v| v * v).sum();
    let report =
        optimize_embedding(&mut phi, &proxy, &data, &config, 0.01, None, 0, &mut rng).unwrap();
    assert_eq!(report.losses[0].total, w0);
    for l in &report.losses {
        assert_eq!(l.total, l.regularizer);
        assert_eq!(l.decision, 0.0);
    }
    assert!(report.losses.last().unwrap().total < w0);
}

#[test]
fn embedding_learns_through_pass_through_proxy() {
    let data = toy_data(200, 9);
    let labels: Vec<f64> = (0..data.len())
        .map(|i| f64::from(data.inputs.row(i)[0] > 0.0))
        .collect();
    let data = Dataset::new(data.inputs, labels).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut phi = Network::new(vec![3], vec![Layer::dense(3, 2)], &mut rng).unwrap();
    let mut proxy = Network::zeros(
        vec![2],
        vec![Layer::dense(2, 1), Layer::act(Activation::Sigmoid)],
    )
    .unwrap();
    proxy.params_mut()[0] = Tensor::vector(vec![1.0, 0.0, 0.0]);
    let config = LoopConfig {
        epochs_embed: 600,
        ..LoopConfig::default()
    };
    let report =
        optimize_embedding(&mut phi, &proxy, &data, &config, 0.1, None, 0, &mut rng).unwrap();
    let last = report.losses.last().unwrap().total;
    assert!(last < 0.1, "final bce {last}");
}

#[test]
fn separable_responses_are_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let records: Vec<Record> = (0..200)
        .map(|k| {
            let z = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let response = f64::from(z[0] - z[1] > 0.0);
            Record {
                query_id: format!("q{k}"),
                index: k,
                z,
                response,
            }
        })
        .collect();
    let buffer = ResponseBuffer {
        rounds: vec![RoundRecords {
            round: 0,
            phi_params: Vec::new(),
            records,
        }],
    };
    let template = Network::new(
        vec![2],
        vec![Layer::dense(2, 1), Layer::act(Activation::Sigmoid)],
        &mut rng,
    )
    .unwrap();
    let config = LoopConfig {
        restarts_proxy: 2,
        proxy_splits: 5,
        ..LoopConfig::default()
    };
    let (_, fit) = fit_proxy(&buffer, &template, &config, 0.07, &mut rng).unwrap();
    assert!(fit.validation_error < 0.05, "{}", fit.validation_error);
}

/// Posterior variance of scalar features under prior precision `a` and
/// noise precision `b`: `f^2 / (a + b sum f^2)`, averaged over rows.
fn scalar_blr_variance(f: &[f64], a: f64, b: f64) -> f64 {
    let s = 1.0 / (a + b * f.iter().map(|v| v * v).sum::<f64>());
    f.iter().map(|v| v * v * s).sum::<f64>() / f.len() as f64
}

#[test]
fn blr_stops_when_feature_norm_doubles() {
    let base = [0.5, -1.0, 0.8, 0.3];
    let scales = [1.0, 1.0, 1.0, 2.0, 2.0];
    let trajectory: Vec<Tensor> = scales
        .iter()
        .map(|s| Tensor::from_rows(&base.iter().map(|v| [v * s]).collect::<Vec<_>>()))
        .collect();
    let config = BlrConfig {
        enabled: true,
        noise_precision: 1e-6,
        ..BlrConfig::default()
    };
    let stop = blr_early_stop(&trajectory, &[1.0, 0.0, 1.0, 0.0], &config, 250).unwrap();
    for (k, s) in scales.iter().enumerate() {
        let f: Vec<f64> = base.iter().map(|v| v * s).collect();
        let oracle = scalar_blr_variance(&f, config.prior_precision, config.noise_precision);
        assert!((stop.variances[k] - oracle).abs() < 1e-12);
    }
    assert!(stop.checkpoint.is_some_and(|c| c <= 3));
    assert_eq!(stop.epoch, 150);
}

#[test]
fn computer_only_head_accuracy() {
    let data = toy_data(300, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let phi = Network::new(vec![3], vec![Layer::dense(3, 2)], &mut rng).unwrap();
    let head = Network::new(
        vec![2],
        vec![Layer::dense(2, 1), Layer::act(Activation::Sigmoid)],
        &mut rng,
    )
    .unwrap();
    let config = ComputerOnlyConfig {
        epochs: 400,
        lr: 0.1,
        ..ComputerOnlyConfig::default()
    };
    let (_, acc) = init_computer_only(&phi, head.clone(), &data, &config, &mut rng).unwrap();
    assert_eq!(acc, 1.0);

    let mut shuffled = data.labels.clone();
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.random_range(0..=i));
    }
    let noise: Vec<f64> = (0..data.len())
        .map(|_| f64::from(rng.random_bool(0.5)))
        .collect();
    let random = Dataset::new(data.inputs.clone(), noise).unwrap();
    let (_, acc) = init_computer_only(&phi, head, &random, &config, &mut rng).unwrap();
    assert!((0.3..=0.7).contains(&acc), "{acc}");
}

#[test]
fn two_hundred_of_a_large_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut q = select_queries(75_933, 200, &mut rng).unwrap();
    q.sort_unstable();
    q.dedup();
    assert_eq!(q.len(), 200);
}

#[test]
fn bce_rejects_out_of_range_responses() {
    let data = toy_data(50, 13);
    let mut s = toy_session(13);
    let mut r = answer(&mut s, &data);
    r[0].value = 1.5;
    assert!(matches!(
        s.run_round(&data, &r),
        Err(Error::InvalidResponse { .. })
    ));
    assert_eq!(LossKind::Bce, s.config.loss);
}
