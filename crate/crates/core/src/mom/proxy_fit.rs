use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{leaves, proxy_predict, select_queries, LoopConfig, Proxy, ResponseBuffer};
use crate::error::{Error, Result};
use crate::nn::{param_grads, LossKind};
use crate::optim::Optimizer;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyFit {
    /// Mean held-out error of the selected restart across the splits.
    pub validation_error: f64,
    /// Mean held-out error of every restart.
    pub restart_errors: Vec<f64>,
    pub chosen: usize,
    /// Records used for fitting and the rounds they came from.
    pub records: usize,
    pub rounds_used: Vec<usize>,
}

/// Held-out error: misclassification rate for categorical actions, mean
/// squared error for continuous ones.
pub fn validation_error(loss: LossKind, threshold: f64, pred: &[f64], target: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let n = pred.len() as f64;
    match loss {
        LossKind::Bce => {
            pred.iter()
                .zip(target)
                .filter(|(&p, &t)| (p > threshold) != (t > threshold))
                .count() as f64
                / n
        }
        LossKind::Mse => {
            pred.iter()
                .zip(target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n
        }
    }
}

/// Full-batch Adam on `(z, targets)` for `config.epochs_proxy` epochs, with
/// optional L2 penalty and dropout on the transformed inputs. Returns the
/// final training loss.
pub fn train_proxy<P: Proxy, R: Rng + ?Sized>(
    proxy: &mut P,
    z: &Tensor,
    targets: &[f64],
    config: &LoopConfig,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut opt = Optimizer::adam(lr);
    let mut last = f64::NAN;
    let keep = 1.0 - config.dropout_proxy;
    let u = {
        let mut tape = Tape::new();
        let zv = tape.leaf(z.clone());
        let u = proxy.transform(&mut tape, zv)?;
        tape.value(u).clone()
    };
    for _ in 0..config.epochs_proxy {
        let mut tape = Tape::new();
        let params = leaves(&mut tape, proxy.params());
        let input = if config.dropout_proxy > 0.0 {
            let mut masked = u.clone();
            for v in masked.data_mut() {
                *v = if rng.random::<f64>() < keep {
                    *v / keep
                } else {
                    0.0
                };
            }
            tape.leaf(masked)
        } else {
            tape.leaf(u.clone())
        };
        let pred = proxy.predict_transformed(&mut tape, &params, input)?;
        let mut loss = config.loss.apply(&mut tape, pred, targets)?;
        if config.l2_proxy > 0.0 {
            for &p in &params {
                let sq = tape.square(p);
                let s = tape.sum(sq);
                let w = tape.scale(s, config.l2_proxy);
                loss = tape.add(loss, w)?;
            }
        }
        last = tape.value(loss).data()[0];
        if !last.is_finite() {
            return Err(Error::NonFiniteLoss { step: opt.steps() });
        }
        let grads = tape.backward(loss)?;
        let g = param_grads(&tape, &grads, &params);
        opt.step(proxy.params_mut(), &g);
    }
    Ok(last)
}

/// Fits the proxy on the current round's records (plus the previous round's
/// when `reuse_previous_round`), choosing among `restarts_proxy` random
/// initializations by mean held-out error over `proxy_splits` random splits.
/// The chosen initialization is then trained on every record.
pub fn fit_proxy<P: Proxy, R: Rng + ?Sized>(
    buffer: &ResponseBuffer,
    template: &P,
    config: &LoopConfig,
    lr: f64,
    rng: &mut R,
) -> Result<(P, ProxyFit)> {
    let current = buffer.rounds.last().ok_or(Error::EmptyBuffer)?;
    if current.records.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut sources = vec![current];
    if config.reuse_previous_round && buffer.rounds.len() >= 2 {
        sources.insert(0, &buffer.rounds[buffer.rounds.len() - 2]);
    }
    let rounds_used: Vec<usize> = sources.iter().map(|r| r.round).collect();
    let records: Vec<_> = sources.iter().flat_map(|r| r.records.iter()).collect();
    let n = records.len();
    let rows: Vec<&[f64]> = records.iter().map(|r| r.z.as_slice()).collect();
    let z = Tensor::from_rows(&rows);
    let targets: Vec<f64> = records.iter().map(|r| r.response).collect();

    let split_seed: u64 = rng.random();
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n.max(2) - 1);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = if n < 2 {
        vec![(vec![0], vec![0])]
    } else {
        let mut srng = ChaCha8Rng::seed_from_u64(split_seed);
        (0..config.proxy_splits)
            .map(|_| {
                let perm = select_queries(n, n, &mut srng).expect("n <= n");
                let (val, train) = perm.split_at(n_val);
                (train.to_vec(), val.to_vec())
            })
            .collect()
    };

    let mut restart_errors = Vec::with_capacity(config.restarts_proxy);
    let mut inits = Vec::with_capacity(config.restarts_proxy);
    for _ in 0..config.restarts_proxy {
        let seed: u64 = rng.random();
        let mut init = template.clone();
        init.reinitialize(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut total = 0.0;
        for (k, (train, val)) in splits.iter().enumerate() {
            let mut p = init.clone();
            let zt = z.select_rows(train);
            let tt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let mut drng = ChaCha8Rng::seed_from_u64(
                seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            train_proxy(&mut p, &zt, &tt, config, lr, &mut drng)?;
            let pred = proxy_predict(&p, &z.select_rows(val))?;
            let tv: Vec<f64> = val.iter().map(|&i| targets[i]).collect();
            total += validation_error(config.loss, config.decision_threshold, &pred, &tv);
        }
        restart_errors.push(total / splits.len() as f64);
        inits.push((seed, init));
    }

    let chosen = restart_errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let (seed, mut proxy) = inits.swap_remove(chosen);
    let mut drng = ChaCha8Rng::seed_from_u64(seed);
    train_proxy(&mut proxy, &z, &targets, config, lr, &mut drng)?;

    Ok((
        proxy,
        ProxyFit {
            validation_error: restart_errors[chosen],
            restart_errors,
            chosen,
            records: n,
            rounds_used,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mom::{Record, RoundRecords};
    use crate::nn::{Activation, Layer, Network};

    fn logistic_proxy(k: usize) -> Network {
        Network::zeros(
            vec![k],
            vec![Layer::dense(k, 1), Layer::act(Activation::Sigmoid)],
        )
        .unwrap()
    }

    fn buffer_from(rounds: Vec<Vec<(Vec<f64>, f64)>>) -> ResponseBuffer {
        ResponseBuffer {
            rounds: rounds
                .into_iter()
                .enumerate()
                .map(|(r, recs)| RoundRecords {
                    round: r,
                    phi_params: vec![],
                    records: recs
                        .into_iter()
                        .enumerate()
                        .map(|(i, (z, a))| Record {
                            query_id: format!("r{r}-q{i}"),
                            index: i,
                            z,
                            response: a,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn quick() -> LoopConfig {
        LoopConfig {
            epochs_proxy: 200,
            proxy_splits: 3,
            ..Default::default()
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let recs = (0..12)
            .map(|i| (vec![i as f64 / 12.0, 1.0 - i as f64 / 12.0], 1.0))
            .collect();
        let buf = buffer_from(vec![recs]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, _) = fit_proxy(&buf, &logistic_proxy(2), &quick(), 0.07, &mut rng).unwrap();
        let z = Tensor::from_rows(
            &buf.rounds[0]
                .records
                .iter()
                .map(|r| r.z.clone())
                .collect::<Vec<_>>(),
        );
        assert!(proxy_predict(&p, &z).unwrap().iter().all(|&v| v > 0.99));
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let buf = ResponseBuffer::default();
        assert!(matches!(
            fit_proxy(&buf, &logistic_proxy(2), &quick(), 0.07, &mut rng),
            Err(Error::EmptyBuffer)
        ));
    }

    #[test]
    fn chooses_restart_with_lowest_mean_split_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let recs = (0..20)
            .map(|_| {
                let x = rng.random_range(-1.0..1.0);
                (
                    vec![x],
                    if x + 0.3 * rng.random_range(-1.0..1.0) > 0.0 {
                        1.0
                    } else {
                        0.0
                    },
                )
            })
            .collect();
        let buf = buffer_from(vec![recs]);
        let cfg = LoopConfig {
            restarts_proxy: 4,
            epochs_proxy: 30,
            ..quick()
        };
        let (_, fit) = fit_proxy(&buf, &logistic_proxy(1), &cfg, 0.07, &mut rng).unwrap();
        assert_eq!(fit.restart_errors.len(), 4);
        let min = fit
            .restart_errors
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(fit.validation_error, min);
        assert_eq!(fit.restart_errors[fit.chosen], min);
    }

    #[test]
    fn reuse_flag_controls_rounds_used() {
        let r0 = vec![(vec![0.0], 0.0), (vec![1.0], 1.0)];
        let r1 = vec![(vec![0.1], 0.0), (vec![0.9], 1.0), (vec![0.2], 0.0)];
        let buf = buffer_from(vec![r0, r1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, fit) = fit_proxy(&buf, &logistic_proxy(1), &quick(), 0.07, &mut rng).unwrap();
        assert_eq!(fit.rounds_used, vec![1]);
        assert_eq!(fit.records, 3);
        let cfg = LoopConfig {
            reuse_previous_round: true,
            ..quick()
        };
        let (_, fit) = fit_proxy(&buf, &logistic_proxy(1), &cfg, 0.07, &mut rng).unwrap();
        assert_eq!(fit.rounds_used, vec![0, 1]);
        assert_eq!(fit.records, 5);
    }
}
