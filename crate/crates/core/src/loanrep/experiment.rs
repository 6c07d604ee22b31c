use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::analysis::{knee_index, shuffle_within_predictions};
use super::data::{ingest_loans, prepare, synth_loans, LoanMatrix, LoanSplit};
use super::model::{
    avatar_proxy, constraint_penalty, distinct_representations, AvatarEmbedding, HAPPINESS, SADNESS,
};
use super::pretrain::{
    default_marginals, pretrain_embedding, Marginal, PretrainConfig, PretrainReport,
};
use super::respondent::SimulatedRespondent;
use crate::blr::BlrConfig;
use crate::error::{Error, Result};
use crate::mom::{proxy_predict, Dataset, LoopConfig, Response, RoundMetrics, Session};
use crate::nn::{Activation, Layer, LossKind, Network};
use crate::optim::Optimizer;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoanSource {
    Synth { n: usize, seed: u64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlphaChoice {
    Fixed {
        value: f64,
    },
    /// Per round, train one candidate per value and keep the knee of the
    /// accuracy against reconstruction curve.
    Auto {
        grid: Vec<f64>,
    },
}

pub const ALPHA_GRID: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub hidden: usize,
    pub alpha: AlphaChoice,
    pub constraint_weight: f64,
    pub epochs: usize,
    pub checkpoint_every: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            hidden: 25,
            alpha: AlphaChoice::Fixed { value: 0.8 },
            constraint_weight: 1.0,
            epochs: 300,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanConfig {
    pub source: LoanSource,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub embedder: EmbedderConfig,
    pub pretrain: PretrainConfig,
    pub marginals: Vec<Marginal>,
    /// Probability that the simulated respondent flips an answer.
    pub epsilon: f64,
    /// Answers collected per queried loan; the response is the approval rate.
    pub votes: usize,
    /// Rows scored when choosing alpha.
    pub validation_rows: usize,
    pub mom: LoopConfig,
}

impl Default for LoanConfig {
    fn default() -> Self {
        Self {
            source: LoanSource::Synth { n: 5000, seed: 0 },
            test_fraction: 0.2,
            split_seed: 0,
            embedder: EmbedderConfig::default(),
            pretrain: PretrainConfig::default(),
            marginals: default_marginals(),
            epsilon: 0.1,
            votes: 5,
            validation_rows: 1000,
            mom: LoopConfig {
                rounds: 6,
                queries_per_round: 200,
                epochs_proxy: 300,
                lr_proxy: 0.01,
                lr_embed: 0.01,
                reuse_previous_round: true,
                restarts_proxy: 3,
                proxy_splits: 3,
                embed_batch: Some(1000),
                loss: LossKind::Bce,
                decision_threshold: 0.5,
                blr_stop: BlrConfig {
                    checkpoint_every: 50,
                    ..BlrConfig::default()
                },
                ..LoopConfig::default()
            },
        }
    }
}

impl LoanConfig {
    pub fn validate(&self) -> Result<()> {
        self.mom.validate()?;
        let alphas = match &self.embedder.alpha {
            AlphaChoice::Fixed { value } => vec![*value],
            AlphaChoice::Auto { grid } => grid.clone(),
        };
        if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("alpha values must lie in [0, 1]".into()));
        }
        if !(0.0..=0.5).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 0.5], got {}",
                self.epsilon
            )));
        }
        if self.votes == 0 || self.embedder.hidden == 0 {
            return Err(Error::Config(
                "votes and hidden units must be positive".into(),
            ));
        }
        Ok(())
    }

    fn loop_config(&self) -> LoopConfig {
        let mut c = self.mom.clone();
        c.epochs_embed = self.embedder.epochs;
        c.blr_stop.checkpoint_every = self.embedder.checkpoint_every;
        c
    }

    pub fn load(&self) -> Result<LoanSplit> {
        let table = match &self.source {
            LoanSource::Synth { n, seed } => synth_loans(*n, *seed),
            LoanSource::File { path } => ingest_loans(path)?.table,
        };
        prepare(&table, self.test_fraction, self.split_seed)
    }
}

/// One candidate of an alpha scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    /// Proxy-predicted decision accuracy on validation rows.
    pub accuracy: f64,
    pub reconstruction_mse: f64,
}

type LoanSession = Session<AvatarEmbedding, Network>;

fn set_alpha(session: &mut LoanSession, alpha: f64) {
    session.phi.alpha = alpha;
    session.config.loss_weight = alpha;
}

/// Runs the pending round once per alpha from the same state.
fn scan_alphas(
    session: &LoanSession,
    data: &Dataset,
    responses: &[Response],
    grid: &[f64],
    validation: &LoanMatrix,
) -> Result<Vec<(AlphaPoint, LoanSession, RoundMetrics)>> {
    grid.iter()
        .map(|&alpha| {
            let mut s = session.clone();
            set_alpha(&mut s, alpha);
            let m = s.run_round(data, responses)?;
            let z = s.phi.encode(&validation.x)?;
            let pred = proxy_predict(&s.proxy, &z)?;
            let accuracy = crate::mom::agreement(&pred, &validation.y, 0.5);
            let reconstruction_mse = s.phi.reconstruction_mse(&validation.x)?;
            Ok((
                AlphaPoint {
                    alpha,
                    accuracy,
                    reconstruction_mse,
                },
                s,
                m,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanReport {
    /// Held-out expected respondent accuracy for the avatars shown in each round.
    pub accuracy: Vec<f64>,
    /// Same, after the last update.
    pub final_accuracy: f64,
    /// Held-out expected accuracy after shuffling final avatars within the
    /// proxy's predicted labels.
    pub shuffled_accuracy: f64,
    pub machine_accuracy: f64,
    /// Mean happiness times sadness on the test split.
    pub happiness_sadness: f64,
    pub constraint_penalty: f64,
    pub reconstruction_mse: f64,
    pub distinct_z: usize,
    pub test_rows: usize,
    pub alphas: Vec<f64>,
    pub scans: Vec<Vec<AlphaPoint>>,
    pub pretrain: PretrainReport,
    pub metrics: Vec<RoundMetrics>,
}

#[derive(Debug, Clone)]
pub struct LoanRun {
    pub report: LoanReport,
    pub split: LoanSplit,
    pub phi: AvatarEmbedding,
    pub proxy: Network,
    pub respondent: SimulatedRespondent,
}

struct Setup {
    split: LoanSplit,
    data: Dataset,
    validation: LoanMatrix,
    session: LoanSession,
    respondent: SimulatedRespondent,
    labeler: ChaCha8Rng,
    pretrain: PretrainReport,
}

fn setup(config: &LoanConfig, seed: u64) -> Result<Setup> {
    config.validate()?;
    let split = config.load()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha0 = match &config.embedder.alpha {
        AlphaChoice::Fixed { value } => *value,
        AlphaChoice::Auto { grid } => grid[grid.len() - 1],
    };
    let mut phi = AvatarEmbedding::new(
        split.train.x.row_len(),
        config.embedder.hidden,
        alpha0,
        config.embedder.constraint_weight,
        &mut rng,
    )?;
    let pretrain = pretrain_embedding(
        &mut phi,
        &split.train.x,
        &config.marginals,
        &config.pretrain,
        rng.random(),
    )?;
    let proxy = avatar_proxy(&mut rng)?;
    let mut session = Session::new(config.loop_config(), phi, proxy, rng.random())?;
    set_alpha(&mut session, alpha0);
    let respondent = SimulatedRespondent::random(config.epsilon, rng.random());
    let labeler = ChaCha8Rng::seed_from_u64(rng.random());
    let data = Dataset::new(split.train.x.clone(), split.train.y.clone())?;
    let v = config.validation_rows.clamp(1, split.train.len());
    let validation = LoanMatrix {
        ids: split.train.ids[..v].to_vec(),
        x: split.train.x.select_rows(&(0..v).collect::<Vec<_>>()),
        y: split.train.y[..v].to_vec(),
    };
    Ok(Setup {
        split,
        data,
        validation,
        session,
        respondent,
        labeler,
        pretrain,
    })
}

fn poll(s: &mut Setup, votes: usize) -> Result<Vec<Response>> {
    let batch = s.session.issue_queries(&s.data)?;
    Ok(batch
        .queries
        .iter()
        .map(|q| Response {
            id: q.id.clone(),
            value: s.respondent.poll(&q.z, votes, &mut s.labeler),
        })
        .collect())
}

/// Logistic regression on the standardized features, as the machine-only
/// reference.
pub fn fit_logistic(x: &Tensor, y: &[f64], seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x.row_len();
    let mut net = Network::new(
        vec![d],
        vec![Layer::dense(d, 1), Layer::act(Activation::Sigmoid)],
        &mut rng,
    )?;
    let mut opt = Optimizer::adam(0.05);
    for _ in 0..400 {
        net.train_step(&mut opt, x, y, LossKind::Bce)?;
    }
    Ok(net)
}

/// Runs the alternating loop against the simulated respondent.
pub fn train_loans(config: &LoanConfig, seed: u64) -> Result<LoanRun> {
    let mut s = setup(config, seed)?;
    let mut accuracy = Vec::new();
    let mut alphas = Vec::new();
    let mut scans = Vec::new();
    for _ in 0..config.mom.rounds {
        let z_test = s.session.phi.encode(&s.split.test.x)?;
        accuracy.push(s.respondent.expected_accuracy(&z_test, &s.split.test.y));
        let responses = poll(&mut s, config.votes)?;
        match &config.embedder.alpha {
            AlphaChoice::Fixed { value } => {
                set_alpha(&mut s.session, *value);
                s.session.run_round(&s.data, &responses)?;
                alphas.push(*value);
            }
            AlphaChoice::Auto { grid } => {
                let mut cands = scan_alphas(&s.session, &s.data, &responses, grid, &s.validation)?;
                let curve: Vec<(f64, f64)> = cands
                    .iter()
                    .map(|(p, _, _)| (p.reconstruction_mse, p.accuracy))
                    .collect();
                let k = knee_index(&curve).unwrap_or(0);
                scans.push(cands.iter().map(|(p, _, _)| p.clone()).collect());
                alphas.push(cands[k].0.alpha);
                s.session = cands.swap_remove(k).1;
            }
        }
    }

    let test = &s.split.test;
    let z = s.session.phi.encode(&test.x)?;
    let final_accuracy = s.respondent.expected_accuracy(&z, &test.y);
    let pred = proxy_predict(&s.session.proxy, &z)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5u64);
    let (shuffled, _) = shuffle_within_predictions(&z, &pred, &mut shuffle_rng)?;
    let n = z.rows().max(1) as f64;
    let machine = fit_logistic(&s.split.train.x, &s.split.train.y, seed)?;
    let machine_pred = machine.predict(&test.x)?;
    let report = LoanReport {
        accuracy,
        final_accuracy,
        shuffled_accuracy: s.respondent.expected_accuracy(&shuffled, &test.y),
        machine_accuracy: crate::mom::agreement(machine_pred.data(), &test.y, 0.5),
        happiness_sadness: (0..z.rows())
            .map(|i| z.row(i)[HAPPINESS] * z.row(i)[SADNESS])
            .sum::<f64>()
            / n,
        constraint_penalty: (0..z.rows())
            .map(|i| constraint_penalty(z.row(i)))
            .sum::<f64>()
            / n,
        reconstruction_mse: s.session.phi.reconstruction_mse(&test.x)?,
        distinct_z: distinct_representations(&z),
        test_rows: z.rows(),
        alphas,
        scans,
        pretrain: s.pretrain.clone(),
        metrics: s.session.metrics.clone(),
    };
    Ok(LoanRun {
        report,
        split: s.split,
        phi: s.session.phi,
        proxy: s.session.proxy,
        respondent: s.respondent,
    })
}

/// Full runs at each fixed alpha, scored on the test split after the last
/// round. `accuracy` is the simulated respondent's expected accuracy.
pub fn alpha_sweep(config: &LoanConfig, seed: u64, grid: &[f64]) -> Result<Vec<AlphaPoint>> {
    grid.iter()
        .map(|&alpha| {
            let mut c = config.clone();
            c.embedder.alpha = AlphaChoice::Fixed { value: alpha };
            let r = train_loans(&c, seed)?.report;
            Ok(AlphaPoint {
                alpha,
                accuracy: r.final_accuracy,
                reconstruction_mse: r.reconstruction_mse,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZRecord {
    pub id: String,
    pub z: Vec<f64>,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XRecord {
    pub id: String,
    pub x: Vec<f64>,
}

/// JSON lines `{id, z, prediction}` for the test split, with the proxy's
/// approval probability as prediction.
pub fn export_z<W: Write>(run: &LoanRun, mut w: W) -> Result<()> {
    let test = &run.split.test;
    let z = run.phi.encode(&test.x)?;
    let pred = proxy_predict(&run.proxy, &z)?;
    for (i, id) in test.ids.iter().enumerate() {
        let rec = ZRecord {
            id: id.clone(),
            z: z.row(i).to_vec(),
            prediction: pred[i],
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// JSON lines `{id, x}` with the standardized numeric features of the test
/// split.
pub fn export_x<W: Write>(run: &LoanRun, mut w: W) -> Result<()> {
    let test = &run.split.test;
    let k = super::data::NUMERIC.len();
    for (i, id) in test.ids.iter().enumerate() {
        let rec = XRecord {
            id: id.clone(),
            x: test.x.row(i)[..k].to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
