use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::{assisted_response, evaluate_policy, fit_machine_baseline, LinearModel};
use super::data::{generate_dataset, human_respond, HumanKind, Sample};
use super::model::{input_rows, AdviceEmbedding, SwitchProxy};
use crate::error::{Error, Result};
use crate::mom::{Dataset, Embedding, LoopConfig, Response, RoundMetrics, Session};
use crate::nn::LossKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideInfoConfig {
    /// Responses above this count as a high-risk call.
    pub threshold: f64,
    /// Initial advice weights are drawn from `U(-init_scale, init_scale)`.
    pub init_scale: f64,
    /// Return the shown weights with the best observed response accuracy
    /// instead of the final, never-shown update.
    pub select_best_round: bool,
    pub mom: LoopConfig,
}

impl Default for SideInfoConfig {
    fn default() -> Self {
        Self {
            threshold: 3.5,
            init_scale: 0.01,
            select_best_round: true,
            mom: LoopConfig {
                rounds: 4,
                queries_per_round: 200,
                epochs_proxy: 300,
                epochs_embed: 500,
                loss: LossKind::Mse,
                decision_threshold: 3.5,
                restarts_proxy: 3,
                proxy_splits: 1,
                reuse_previous_round: true,
                ..LoopConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomFit {
    pub model: LinearModel,
    /// Round whose weights `model` holds; `metrics.len()` for the final update.
    pub selected_round: usize,
    pub proxy: SwitchProxy,
    pub metrics: Vec<RoundMetrics>,
}

/// Runs the alternating loop against the simulated decision maker `kind`,
/// who sees each queried sample's side information.
pub fn train_mom(
    train: &[Sample],
    kind: HumanKind,
    config: &SideInfoConfig,
    seed: u64,
) -> Result<MomFit> {
    if train.is_empty() {
        return Err(Error::TooFew {
            what: "training samples",
            needed: 1,
            got: 0,
        });
    }
    let data = Dataset::new(
        input_rows(train),
        train.iter().map(|s| f64::from(s.y)).collect(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = AdviceEmbedding::new(config.init_scale, &mut rng)?;
    let proxy = SwitchProxy::new(&mut rng)?;
    let mut session = Session::new(config.mom.clone(), phi, proxy, seed)?;
    let queries = config.mom.queries_per_round.min(train.len());
    session.config.queries_per_round = queries;
    for _ in 0..config.mom.rounds {
        let batch = session.issue_queries(&data)?;
        let responses: Vec<Response> = batch
            .queries
            .iter()
            .map(|q| {
                let s = &train[q.index];
                let w = [q.z[5], q.z[6], q.z[7], q.z[8]];
                Response {
                    id: q.id.clone(),
                    value: human_respond(kind, &s.xf(), &w, s.s),
                }
            })
            .collect();
        session.run_round(&data, &responses)?;
    }
    let mut selected_round = session.metrics.len();
    if config.select_best_round {
        let mut best = f64::NEG_INFINITY;
        for (k, m) in session.metrics.iter().enumerate() {
            if m.response_accuracy >= best {
                best = m.response_accuracy;
                selected_round = k;
            }
        }
    }
    let mut phi = session.phi.clone();
    if let Some(r) = session.buffer.rounds.get(selected_round) {
        for (dst, src) in phi.params_mut().into_iter().zip(&r.phi_params) {
            *dst = src.clone();
        }
    }
    Ok(MomFit {
        model: phi.model(),
        selected_round,
        proxy: session.proxy,
        metrics: session.metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub seeds: u64,
    pub n: usize,
    pub train_fraction: f64,
    pub experiment: SideInfoConfig,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            n: 1000,
            train_fraction: 0.8,
            experiment: SideInfoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: HumanKind,
    /// Mean over seeds of the decision maker's accuracy with learned advice.
    pub mom: f64,
    /// Mean over seeds of the decision maker's accuracy with least-squares advice.
    pub h_machine: f64,
    pub mom_per_seed: Vec<f64>,
    pub h_machine_per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideInfoTable {
    pub rows: Vec<TableRow>,
    pub machine_only: f64,
    pub machine_only_per_seed: Vec<f64>,
    pub config: TableConfig,
}

impl SideInfoTable {
    pub fn row(&self, kind: HumanKind) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<8} {:>7} {:>12}\n", "", "M∘M", "h(Machine)");
        for r in &self.rows {
            out += &format!(
                "{:<8} {:>7.3} {:>12.3}\n",
                capitalize(r.kind.name()),
                r.mom,
                r.h_machine
            );
        }
        out += &format!("machine-only: {:.3}\n", self.machine_only);
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Accuracy of every human model with learned and with least-squares
/// advice, averaged over `config.seeds` independent datasets.
pub fn run_table(config: &TableConfig) -> Result<SideInfoTable> {
    if config.seeds == 0 {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let thr = config.experiment.threshold;
    let mut machine = Vec::new();
    let mut per_kind: Vec<(Vec<f64>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new()); HumanKind::ALL.len()];
    for seed in 0..config.seeds {
        let data = generate_dataset(config.n, seed);
        let cut = ((config.n as f64 * config.train_fraction).round() as usize)
            .clamp(1, config.n.saturating_sub(1));
        let (train, test) = data.split_at(cut);
        let baseline = fit_machine_baseline(train)?;
        machine.push(evaluate_policy(|s| baseline.predict(&s.xf()), test, thr)?);
        for (k, kind) in HumanKind::ALL.into_iter().enumerate() {
            let fit = train_mom(train, kind, &config.experiment, seed)?;
            per_kind[k].0.push(evaluate_policy(
                |s| assisted_response(kind, &fit.model, s),
                test,
                thr,
            )?);
            per_kind[k].1.push(evaluate_policy(
                |s| assisted_response(kind, &baseline, s),
                test,
                thr,
            )?);
        }
    }
    let rows = HumanKind::ALL
        .into_iter()
        .zip(per_kind)
        .map(|(kind, (m, h))| TableRow {
            kind,
            mom: mean(&m),
            h_machine: mean(&h),
            mom_per_seed: m,
            h_machine_per_seed: h,
        })
        .collect();
    Ok(SideInfoTable {
        rows,
        machine_only: mean(&machine),
        machine_only_per_seed: machine,
        config: config.clone(),
    })
}
