use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::{generate_dataset, random_rotation, Label, PointCloud};
use super::model::{HistogramProxy, ProjectionEmbedding};
use super::oracle::Oracle;
use crate::error::{Error, Result};
use crate::mom::{
    embed_all, init_computer_only, proxy_predict, ComputerOnlyConfig, Dataset, LoopConfig, Proxy,
    Response, RoundMetrics, Session,
};
use crate::tensor::Tensor;

/// How the projection is initialized before the first round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiInit {
    /// Gaussian random projection, entries `N(0, 1)`.
    Random,
    /// Haar-random rotation.
    Rotation,
    /// Trained with a disposable classifier on the ground truth.
    ComputerOnly(ComputerOnlyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointcloudConfig {
    pub clouds: usize,
    pub dim: usize,
    pub points: usize,
    pub jitter: f64,
    pub data_seed: u64,
    pub test_fraction: f64,
    pub bandwidth: f64,
    pub orthogonality_weight: f64,
    pub tau: f64,
    pub oracle_seed: u64,
    pub init: PhiInit,
    pub mom: LoopConfig,
}

impl Default for PointcloudConfig {
    fn default() -> Self {
        Self {
            clouds: 1000,
            dim: 3,
            points: 40,
            jitter: 0.05,
            data_seed: 0,
            test_fraction: 0.2,
            bandwidth: 0.5,
            orthogonality_weight: 5.0,
            tau: 0.05,
            oracle_seed: 0,
            init: PhiInit::Random,
            mom: LoopConfig {
                restarts_proxy: 6,
                proxy_splits: 3,
                embed_batch: Some(200),
                reuse_previous_round: true,
                skip_embed_on_perfect: false,
                ..LoopConfig::default()
            },
        }
    }
}

impl PointcloudConfig {
    pub fn validate(&self) -> Result<()> {
        self.mom.validate()?;
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.bandwidth <= 0.0 || self.orthogonality_weight < 0.0 || self.tau < 0.0 {
            return Err(Error::Config(
                "bandwidth must be positive, orthogonality_weight and tau nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The generated clouds split into the pool queries are drawn from and a
/// held-out evaluation set.
#[derive(Debug, Clone)]
pub struct PointcloudData {
    pub train: Dataset,
    pub test: Dataset,
    pub test_labels: Vec<Label>,
    /// Ground-truth projection (the dataset rotation).
    pub rotation: Tensor,
}

impl PointcloudData {
    pub fn build(config: &PointcloudConfig) -> Result<Self> {
        let ds = generate_dataset(
            config.clouds,
            config.dim,
            config.points,
            config.jitter,
            config.data_seed,
        )?;
        let n_test = ((config.clouds as f64 * config.test_fraction).round() as usize)
            .clamp(1, config.clouds - 1);
        let (train, test) = ds.clouds.split_at(config.clouds - n_test);
        let to_data = |c: &[PointCloud]| {
            let rows: Vec<Vec<f64>> = c.iter().map(PointCloud::flat).collect();
            Dataset::new(
                Tensor::from_rows(&rows),
                c.iter().map(|c| c.label.as_target()).collect(),
            )
        };
        Ok(Self {
            train: to_data(train)?,
            test: to_data(test)?,
            test_labels: test.iter().map(|c| c.label).collect(),
            rotation: ds.rotation,
        })
    }
}

/// Expected fraction of clouds the oracle labels correctly when shown the
/// representations `z`.
pub fn expected_accuracy(oracle: &Oracle, z: &Tensor, labels: &[Label]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| oracle.prob_correct(z.row(i), l))
        .sum::<f64>()
        / labels.len() as f64
}

/// A scatterplot shown to the labeler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownQuery {
    pub id: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointcloudSession {
    pub config: PointcloudConfig,
    pub session: Session<ProjectionEmbedding, HistogramProxy>,
    /// Validation accuracy of the disposable head under computer-only init.
    pub init_accuracy: Option<f64>,
}

impl PointcloudSession {
    pub fn new(config: PointcloudConfig, data: &PointcloudData, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = match config.init {
            PhiInit::Rotation => random_rotation(config.dim, &mut rng),
            _ => gaussian_matrix(config.dim, &mut rng),
        };
        let mut phi =
            ProjectionEmbedding::new(&matrix, config.points, config.orthogonality_weight)?;
        let mut proxy = HistogramProxy::new(config.points, config.bandwidth, &mut rng)?;
        let mut init_accuracy = None;
        if let PhiInit::ComputerOnly(c) = config.init {
            let (trained, acc) =
                init_computer_only(&phi, proxy.clone(), &data.train, &c, &mut rng)?;
            phi = trained;
            proxy.reinitialize(&mut rng);
            init_accuracy = Some(acc);
        }
        let session = Session::new(config.mom.clone(), phi, proxy, rng.random())?;
        Ok(Self {
            config,
            session,
            init_accuracy,
        })
    }

    pub fn round(&self) -> usize {
        self.session.round
    }

    pub fn finished(&self) -> bool {
        self.session.round >= self.config.mom.rounds
    }

    pub fn queries(&mut self, data: &PointcloudData) -> Result<Vec<ShownQuery>> {
        if self.finished() {
            return Err(Error::NoPendingQueries);
        }
        let batch = self.session.issue_queries(&data.train)?;
        Ok(batch
            .queries
            .iter()
            .map(|q| ShownQuery {
                id: q.id.clone(),
                points: q.z.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            })
            .collect())
    }

    pub fn submit(
        &mut self,
        data: &PointcloudData,
        labels: &[(String, Label)],
    ) -> Result<RoundMetrics> {
        let responses: Vec<Response> = labels
            .iter()
            .map(|(id, l)| Response {
                id: id.clone(),
                value: l.as_target(),
            })
            .collect();
        self.session.run_round(&data.train, &responses)
    }

    pub fn test_representations(&self, data: &PointcloudData) -> Result<Tensor> {
        embed_all(&self.session.phi, &data.test.inputs)
    }

    pub fn penalty(&self) -> f64 {
        self.session.phi.penalty()
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Tensor {
    let data = (0..p * p).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(vec![p, p], data).expect("p*p entries")
}

/// Per-round diagnostics of a simulated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Held-out oracle accuracy of the projection shown in each round.
    pub accuracy: Vec<f64>,
    /// Held-out agreement between each round's fitted proxy and the oracle.
    pub agreement: Vec<f64>,
    /// Held-out oracle accuracy after the last update.
    pub final_accuracy: f64,
    pub final_penalty: f64,
    pub metrics: Vec<RoundMetrics>,
    pub init_accuracy: Option<f64>,
}

/// Runs `config.mom.rounds` rounds with the synthetic oracle as labeler.
pub fn run_simulated_session(config: &PointcloudConfig, seed: u64) -> Result<SimulationReport> {
    let data = PointcloudData::build(config)?;
    let oracle = Oracle::new(config.points, config.tau, config.oracle_seed);
    let mut s = PointcloudSession::new(config.clone(), &data, seed)?;
    let mut labeler = ChaCha8Rng::seed_from_u64(seed ^ 0x5_eed1_abe1_u64);
    let mut accuracy = Vec::new();
    let mut agreement = Vec::new();
    for _ in 0..config.mom.rounds {
        let z_test = s.test_representations(&data)?;
        accuracy.push(expected_accuracy(&oracle, &z_test, &data.test_labels));
        let labels: Vec<(String, Label)> = s
            .queries(&data)?
            .into_iter()
            .map(|q| {
                let xy: Vec<f64> = q.points.iter().flatten().copied().collect();
                (q.id, oracle.label(&xy, &mut labeler))
            })
            .collect();
        s.submit(&data, &labels)?;
        let pred = proxy_predict(&s.session.proxy, &z_test)?;
        let oracle_says: Vec<f64> = (0..z_test.rows())
            .map(|i| oracle.prob_x(z_test.row(i)))
            .collect();
        agreement.push(crate::mom::agreement(&pred, &oracle_says, 0.5));
    }
    let z_test = s.test_representations(&data)?;
    Ok(SimulationReport {
        accuracy,
        agreement,
        final_accuracy: expected_accuracy(&oracle, &z_test, &data.test_labels),
        final_penalty: s.penalty(),
        metrics: s.session.metrics.clone(),
        init_accuracy: s.init_accuracy,
    })
}
