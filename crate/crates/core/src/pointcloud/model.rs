use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::PointCloud;
use crate::error::{Error, Result};
use crate::histogram::{self, BinGrid};
use crate::mom::{Embedding, Proxy};
use crate::nn::{Activation, Layer, Network};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `points . matrix` restricted to its first two columns, as an `m x 2`
/// matrix.
pub fn project(matrix: &Tensor, points: &Tensor) -> Result<Tensor> {
    let p = matrix.rows();
    if matrix.shape() != [p, p] || points.shape().len() != 2 || points.row_len() != p {
        return Err(Error::Shape {
            op: "project",
            detail: format!("points {:?}, matrix {:?}", points.shape(), matrix.shape()),
        });
    }
    let full = points.matmul(matrix)?;
    let rows: Vec<[f64; 2]> = (0..full.rows())
        .map(|i| [full.row(i)[0], full.row(i)[1]])
        .collect();
    Ok(Tensor::from_rows(&rows))
}

pub fn project_cloud(matrix: &Tensor, cloud: &PointCloud) -> Result<Tensor> {
    project(matrix, &Tensor::from_rows(&cloud.points))
}

/// `||M^T M - I||_F^2`.
pub fn orthogonality_penalty(matrix: &Tensor) -> f64 {
    let p = matrix.rows();
    let mtm = matrix.transpose().matmul(matrix).expect("square matrix");
    (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| {
            let d = mtm.data()[i * p + j] - if i == j { 1.0 } else { 0.0 };
            d * d
        })
        .sum()
}

/// Soft histogram of an `m x 2` point set (or interleaved pairs), as a
/// `6 x 6` tensor indexed `[y][x]`.
pub fn soft_histogram(points2d: &Tensor, bandwidth: f64) -> Result<Tensor> {
    if bandwidth <= 0.0 {
        return Err(Error::Config(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let grid = BinGrid::default();
    Tensor::new(
        vec![grid.bins, grid.bins],
        histogram::soft_histogram(&grid, points2d.data(), bandwidth),
    )
}

/// `phi`: a bias-free `p x p` linear map applied to every point, of which
/// the first two output coordinates are kept. Representations are the
/// projected points flattened to `(x0, y0, x1, y1, ..)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEmbedding {
    pub net: Network,
    pub points: usize,
    pub orthogonality_weight: f64,
}

impl ProjectionEmbedding {
    pub fn new(matrix: &Tensor, points: usize, orthogonality_weight: f64) -> Result<Self> {
        let p = matrix.rows();
        if matrix.shape() != [p, p] {
            return Err(Error::Shape {
                op: "projection",
                detail: format!("matrix {:?} is not square", matrix.shape()),
            });
        }
        let mut net = Network::zeros(vec![p], vec![Layer::dense_no_bias(p, p)])?;
        net.params_mut()[0] = Tensor::vector(matrix.data().to_vec());
        Ok(Self {
            net,
            points,
            orthogonality_weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.net.input_shape()[0]
    }

    pub fn matrix(&self) -> Tensor {
        let p = self.dim();
        self.net.params()[0]
            .clone()
            .reshape(&[p, p])
            .expect("p*p weights")
    }

    pub fn penalty(&self) -> f64 {
        orthogonality_penalty(&self.matrix())
    }

    fn penalty_var(&self, tape: &mut Tape, w: Var) -> Result<Var> {
        let p = self.dim();
        let m = tape.reshape(w, &[p, p])?;
        let t_index = (0..p)
            .flat_map(|i| (0..p).map(move |j| j * p + i))
            .collect();
        let mt = tape.gather(w, t_index, &[p, p])?;
        let mtm = tape.matmul(mt, m)?;
        let eye = tape.leaf(Tensor::identity(p));
        let d = tape.sub(mtm, eye)?;
        let sq = tape.square(d);
        Ok(tape.sum(sq))
    }
}

impl Embedding for ProjectionEmbedding {
    fn params(&self) -> Vec<&Tensor> {
        self.net.params().iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut().iter_mut().collect()
    }

    fn embed(&self, tape: &mut Tape, params: &[Var], inputs: Var) -> Result<Var> {
        let (n, p, m) = (tape.value(inputs).rows(), self.dim(), self.points);
        if tape.value(inputs).row_len() != m * p {
            return Err(Error::Shape {
                op: "projection",
                detail: format!(
                    "rows of {}, expected {m} points of dimension {p}",
                    tape.value(inputs).row_len()
                ),
            });
        }
        let pts = tape.reshape(inputs, &[n * m, p])?;
        let full = tape.dense(pts, params[0], p, p, false)?;
        let xy = tape.select_columns(full, &[0, 1])?;
        tape.reshape(xy, &[n, 2 * m])
    }

    fn regularizer(
        &self,
        tape: &mut Tape,
        params: &[Var],
        _inputs: Var,
        _z: Var,
    ) -> Result<Option<Var>> {
        if self.orthogonality_weight == 0.0 {
            return Ok(None);
        }
        let pen = self.penalty_var(tape, params[0])?;
        Ok(Some(tape.scale(pen, self.orthogonality_weight)))
    }
}

/// `h-hat`: soft 6x6 histogram of the shown points (as fractions of `m`),
/// then a 3x3 convolution to 3 channels, 2x2 max pooling and a logistic
/// output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramProxy {
    pub net: Network,
    pub grid: BinGrid,
    pub bandwidth: f64,
    pub points: usize,
}

impl HistogramProxy {
    pub fn new<R: Rng + ?Sized>(points: usize, bandwidth: f64, rng: &mut R) -> Result<Self> {
        let grid = BinGrid::default();
        let b = grid.bins;
        let pooled = 3 * ((b - 2) / 2) * ((b - 2) / 2);
        let net = Network::new(
            vec![1, b, b],
            vec![
                Layer::conv3x3(1, 3),
                Layer::MaxPool2d { size: 2 },
                Layer::dense(pooled, 1),
                Layer::act(Activation::Sigmoid),
            ],
            rng,
        )?;
        Ok(Self {
            net,
            grid,
            bandwidth,
            points,
        })
    }

    fn histogram(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let n = tape.value(z).rows();
        let pts = tape.reshape(z, &[n, self.points, 2])?;
        let h = tape.soft_histogram(pts, self.grid, self.bandwidth)?;
        Ok(tape.scale(h, 1.0 / self.points as f64))
    }
}

impl Proxy for HistogramProxy {
    fn params(&self) -> Vec<&Tensor> {
        self.net.params().iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut().iter_mut().collect()
    }

    fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.net.reinitialize(rng);
    }

    fn transform(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        self.histogram(tape, z)
    }

    fn predict_transformed(&self, tape: &mut Tape, params: &[Var], u: Var) -> Result<Var> {
        self.net.apply(tape, params, u)
    }

    fn features(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var> {
        let h = self.histogram(tape, z)?;
        Proxy::features(&self.net, tape, params, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mom::{embed_all, leaves};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn penalty_closed_forms() {
        assert_eq!(orthogonality_penalty(&Tensor::identity(3)), 0.0);
        let two = Tensor::identity(3).map(|v| 2.0 * v);
        assert!((orthogonality_penalty(&two) - 27.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_matches_project() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = super::super::data::random_rotation(3, &mut rng).map(|v| 1.3 * v);
        let cloud: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let phi = ProjectionEmbedding::new(&m, 8, 1.0).unwrap();
        let flat: Vec<f64> = cloud.iter().flatten().copied().collect();
        let z = embed_all(&phi, &Tensor::from_rows(&[flat])).unwrap();
        let direct = project(&m, &Tensor::from_rows(&cloud)).unwrap();
        for (a, b) in z.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_penalty_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Tensor::new(
            vec![3, 3],
            (0..9).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let phi = ProjectionEmbedding::new(&m, 8, 2.5).unwrap();
        let mut tape = Tape::new();
        let p = leaves(&mut tape, Embedding::params(&phi));
        let x = tape.leaf(Tensor::zeros(&[1, 24]));
        let r = phi.regularizer(&mut tape, &p, x, x).unwrap().unwrap();
        assert!((tape.value(r).data()[0] - 2.5 * orthogonality_penalty(&m)).abs() < 1e-12);
    }

    #[test]
    fn proxy_output_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = HistogramProxy::new(10, 0.5, &mut rng).unwrap();
        let z = Tensor::new(
            vec![4, 20],
            (0..80).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let out = crate::mom::proxy_predict(&h, &z).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn project_rejects_mismatch() {
        assert!(project(&Tensor::identity(3), &Tensor::zeros(&[5, 2])).is_err());
    }
}
