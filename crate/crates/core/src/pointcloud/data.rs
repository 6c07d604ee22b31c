use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mom::Dataset;
use crate::tensor::Tensor;

/// Variance of the coordinates orthogonal to the shape plane.
pub const NOISE_VARIANCE: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    X,
    O,
}

impl Label {
    /// `X` is the positive class.
    pub fn as_target(self) -> f64 {
        match self {
            Label::X => 1.0,
            Label::O => 0.0,
        }
    }

    pub fn from_target(v: f64) -> Self {
        if v > 0.5 {
            Label::X
        } else {
            Label::O
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::X => "X",
            Label::O => "O",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "X" | "x" => Ok(Label::X),
            "O" | "o" => Ok(Label::O),
            other => Err(Error::Config(format!(
                "label must be X or O, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    pub label: Label,
}

impl PointCloud {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }
}

/// One point of the canonical 2-D shape: `X` is the two diagonals of
/// `[-1, 1]^2`, `O` the unit circle.
pub fn canonical_point<R: Rng + ?Sized>(label: Label, rng: &mut R) -> [f64; 2] {
    match label {
        Label::X => {
            let t = rng.random_range(-1.0..=1.0);
            if rng.random_bool(0.5) {
                [t, t]
            } else {
                [t, -t]
            }
        }
        Label::O => {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            [a.cos(), a.sin()]
        }
    }
}

/// `m` points of the canonical shape with isotropic in-plane jitter.
pub fn canonical_shape<R: Rng + ?Sized>(
    label: Label,
    m: usize,
    jitter: f64,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    (0..m)
        .map(|_| {
            let [x, y] = canonical_point(label, rng);
            if jitter > 0.0 {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [x + jitter * a, y + jitter * b]
            } else {
                [x, y]
            }
        })
        .collect()
}

/// Haar-random rotation (determinant +1) via QR of a Gaussian matrix.
pub fn random_rotation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Tensor {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    let mut t = Tensor::zeros(&[p, p]);
    for i in 0..p {
        for j in 0..p {
            t.data_mut()[i * p + j] = q[(i, j)];
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudDataset {
    pub clouds: Vec<PointCloud>,
    /// `p x p` rotation `Q`; each point is `x = Q u` for a canonical-frame
    /// point `u` whose first two coordinates carry the shape. The hidden
    /// plane is spanned by the first two columns of `Q`.
    pub rotation: Tensor,
}

impl PointCloudDataset {
    /// The projection matrix that recovers the canonical frame:
    /// `points . Q = u`, i.e. [`super::project`] with `Q` shows the shape.
    pub fn ground_truth_projection(&self) -> Tensor {
        self.rotation.clone()
    }

    pub fn to_dataset(&self) -> Dataset {
        let rows: Vec<Vec<f64>> = self.clouds.iter().map(PointCloud::flat).collect();
        let labels = self.clouds.iter().map(|c| c.label.as_target()).collect();
        Dataset::new(Tensor::from_rows(&rows), labels).expect("one label per cloud")
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.clouds {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<PointCloud>> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line)?);
        }
        Ok(out)
    }
}

/// `n` clouds of `m` points in `R^p`, labels drawn fairly, all sharing one
/// random rotation.
pub fn generate_dataset(
    n: usize,
    p: usize,
    m: usize,
    jitter: f64,
    seed: u64,
) -> Result<PointCloudDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = random_rotation(p, &mut rng);
    generate_with_rotation(n, m, jitter, rotation, &mut rng)
}

pub fn generate_with_rotation<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    jitter: f64,
    rotation: Tensor,
    rng: &mut R,
) -> Result<PointCloudDataset> {
    let p = rotation.rows();
    if p < 3 {
        return Err(Error::Config(format!(
            "point dimension must be at least 3, got {p}"
        )));
    }
    if m < 8 {
        return Err(Error::Config(format!(
            "clouds need at least 8 points, got {m}"
        )));
    }
    let noise = Normal::new(0.0, NOISE_VARIANCE.sqrt()).expect("valid sd");
    let q = rotation.data();
    let clouds = (0..n)
        .map(|_| {
            let label = if rng.random_bool(0.5) {
                Label::X
            } else {
                Label::O
            };
            let points = canonical_shape(label, m, jitter, rng)
                .into_iter()
                .map(|[a, b]| {
                    let mut u = vec![a, b];
                    u.extend((2..p).map(|_| noise.sample(rng)));
                    // x = Q u
                    (0..p)
                        .map(|i| (0..p).map(|j| q[i * p + j] * u[j]).sum())
                        .collect()
                })
                .collect();
            PointCloud { points, label }
        })
        .collect();
    Ok(PointCloudDataset { clouds, rotation })
}
