use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    embed_all, fit_proxy, optimize_embedding, select_queries, Dataset, EmbedReport, Embedding,
    LoopConfig, Probe, Proxy, ProxyFit,
};
use crate::error::{Error, Result};
use crate::nn::LossKind;
use crate::tensor::Tensor;

/// One logged decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub query_id: String,
    /// Row of the dataset the query was drawn from.
    pub index: usize,
    /// Representation shown for this query.
    pub z: Vec<f64>,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecords {
    pub round: usize,
    /// Embedding parameters that produced every `z` of this round.
    pub phi_params: Vec<Tensor>,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseBuffer {
    pub rounds: Vec<RoundRecords>,
}

impl ResponseBuffer {
    pub fn len(&self) -> usize {
        self.rounds.iter().map(|r| r.records.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub index: usize,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub round: usize,
    pub queries: Vec<Query>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Agreement of this round's responses with the ground truth.
    pub response_accuracy: f64,
    pub proxy_validation_error: f64,
    pub lr_proxy: f64,
    pub lr_embed: f64,
    pub embedding_updated: bool,
    pub embed_loss_first: Option<f64>,
    pub embed_loss_last: Option<f64>,
    pub embed_epochs: usize,
}

/// State of one alternating training session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session<E, P> {
    pub config: LoopConfig,
    pub round: usize,
    pub phi: E,
    pub proxy: P,
    pub buffer: ResponseBuffer,
    pub metrics: Vec<RoundMetrics>,
    pub pending: Option<QueryBatch>,
    pub last_fit: Option<ProxyFit>,
    pub last_embed: Option<EmbedReport>,
    rng: ChaCha8Rng,
}

impl<E: Embedding, P: Proxy> Session<E, P> {
    pub fn new(config: LoopConfig, phi: E, proxy: P, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            round: 0,
            phi,
            proxy,
            buffer: ResponseBuffer::default(),
            metrics: Vec::new(),
            pending: None,
            last_fit: None,
            last_embed: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// The current round's query batch, drawn on first call and returned
    /// unchanged until responses are submitted.
    pub fn issue_queries(&mut self, data: &Dataset) -> Result<&QueryBatch> {
        if self.pending.is_none() {
            let indices = select_queries(data.len(), self.config.queries_per_round, &mut self.rng)?;
            let z = embed_all(&self.phi, &data.inputs.select_rows(&indices))?;
            let queries = indices
                .iter()
                .enumerate()
                .map(|(k, &index)| Query {
                    id: format!("r{}-q{}", self.round, k),
                    index,
                    z: z.row(k).to_vec(),
                })
                .collect();
            self.pending = Some(QueryBatch {
                round: self.round,
                queries,
            });
        }
        Ok(self.pending.as_ref().expect("just set"))
    }

    fn check_responses(&self, responses: &[Response]) -> Result<()> {
        let batch = self.pending.as_ref().ok_or(Error::NoPendingQueries)?;
        let issued: HashSet<&str> = batch.queries.iter().map(|q| q.id.as_str()).collect();
        let mut seen = HashSet::new();
        let mut dups = Vec::new();
        let mut unknown = Vec::new();
        for r in responses {
            if !issued.contains(r.id.as_str()) {
                unknown.push(r.id.clone());
            } else if !seen.insert(r.id.as_str()) {
                dups.push(r.id.clone());
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownQuery(unknown));
        }
        if !dups.is_empty() {
            return Err(Error::DuplicateQuery(dups));
        }
        let missing: Vec<String> = batch
            .queries
            .iter()
            .filter(|q| !seen.contains(q.id.as_str()))
            .map(|q| q.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingQuery(missing));
        }
        for r in responses {
            let ok = match self.config.loss {
                LossKind::Bce => (0.0..=1.0).contains(&r.value),
                LossKind::Mse => r.value.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidResponse {
                    id: r.id.clone(),
                    value: r.value,
                });
            }
        }
        Ok(())
    }

    /// Logs the responses for the pending batch, refits the proxy, retrains
    /// the embedding through it and advances the round. On error the
    /// session is left untouched.
    pub fn run_round(&mut self, data: &Dataset, responses: &[Response]) -> Result<RoundMetrics> {
        self.check_responses(responses)?;
        let mut next = self.clone();
        let batch = next.pending.take().expect("checked");
        let by_id: HashMap<&str, f64> =
            responses.iter().map(|r| (r.id.as_str(), r.value)).collect();
        let records: Vec<Record> = batch
            .queries
            .iter()
            .map(|q| Record {
                query_id: q.id.clone(),
                index: q.index,
                z: q.z.clone(),
                response: by_id[q.id.as_str()],
            })
            .collect();

        let thr = next.config.decision_threshold;
        let correct = records
            .iter()
            .filter(|r| (r.response > thr) == (data.labels[r.index] > thr))
            .count();
        let accuracy = correct as f64 / records.len().max(1) as f64;

        let probe = Probe {
            inputs: data
                .inputs
                .select_rows(&records.iter().map(|r| r.index).collect::<Vec<_>>()),
            targets: records.iter().map(|r| r.response).collect(),
        };
        next.buffer.rounds.push(RoundRecords {
            round: next.round,
            phi_params: next.phi.params().into_iter().cloned().collect(),
            records,
        });

        let factor = next.config.lr_schedule.factor(accuracy, next.round);
        let lr_proxy = next.config.lr_proxy * factor;
        let lr_embed = next.config.lr_embed * factor;

        let (proxy, fit) = fit_proxy(
            &next.buffer,
            &next.proxy,
            &next.config,
            lr_proxy,
            &mut next.rng,
        )?;
        next.proxy = proxy;

        let skip = next.config.skip_embed_on_perfect && accuracy >= 1.0;
        let report = if skip {
            None
        } else {
            Some(optimize_embedding(
                &mut next.phi,
                &next.proxy,
                data,
                &next.config,
                lr_embed,
                Some(&probe),
                next.round,
                &mut next.rng,
            )?)
        };

        let metrics = RoundMetrics {
            round: next.round,
            response_accuracy: accuracy,
            proxy_validation_error: fit.validation_error,
            lr_proxy,
            lr_embed,
            embedding_updated: !skip,
            embed_loss_first: report
                .as_ref()
                .and_then(|r| r.losses.first())
                .map(|l| l.total),
            embed_loss_last: report
                .as_ref()
                .and_then(|r| r.losses.last())
                .map(|l| l.total),
            embed_epochs: report.as_ref().map_or(0, |r| r.epochs_kept),
        };
        next.metrics.push(metrics.clone());
        next.last_fit = Some(fit);
        next.last_embed = report;
        next.round += 1;
        *self = next;
        Ok(metrics)
    }
}
