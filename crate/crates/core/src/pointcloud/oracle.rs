use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{canonical_shape, Label};
use crate::histogram::{hard_histogram, BinGrid};
use crate::tensor::sigmoid;

/// Number of canonical shapes averaged into each reference histogram.
pub const REFERENCE_SHAPES: usize = 200;

/// Simulated labeler: compares the hard histogram of a scatterplot with
/// reference histograms of the two canonical shapes and answers `X` with
/// probability `sigmoid((d_O - d_X) / tau)`, `d` being L1 distances between
/// histograms normalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub grid: BinGrid,
    pub tau: f64,
    pub reference_x: Vec<f64>,
    pub reference_o: Vec<f64>,
}

impl Oracle {
    pub fn new(points: usize, tau: f64, seed: u64) -> Self {
        let grid = BinGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reference = |label| {
            let mut acc = vec![0.0; grid.bins * grid.bins];
            for _ in 0..REFERENCE_SHAPES {
                let xy: Vec<f64> = canonical_shape(label, points, 0.0, &mut rng)
                    .into_iter()
                    .flatten()
                    .collect();
                for (a, h) in acc.iter_mut().zip(normalized(&grid, &xy)) {
                    *a += h / REFERENCE_SHAPES as f64;
                }
            }
            acc
        };
        let reference_x = reference(Label::X);
        let reference_o = reference(Label::O);
        Self {
            grid,
            tau,
            reference_x,
            reference_o,
        }
    }

    /// `(d_X, d_O)` for interleaved 2-D points.
    pub fn distances(&self, xy: &[f64]) -> (f64, f64) {
        let h = normalized(&self.grid, xy);
        let l1 = |r: &[f64]| h.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>();
        (l1(&self.reference_x), l1(&self.reference_o))
    }

    pub fn prob_x(&self, xy: &[f64]) -> f64 {
        let (dx, do_) = self.distances(xy);
        let margin = do_ - dx;
        if self.tau == 0.0 {
            return match margin.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => 0.0,
                _ => 0.5,
            };
        }
        sigmoid(margin / self.tau)
    }

    pub fn label<R: Rng + ?Sized>(&self, xy: &[f64], rng: &mut R) -> Label {
        if rng.random::<f64>() < self.prob_x(xy) {
            Label::X
        } else {
            Label::O
        }
    }

    /// Probability that the oracle answers `truth` when shown `xy`.
    pub fn prob_correct(&self, xy: &[f64], truth: Label) -> f64 {
        let p = self.prob_x(xy);
        match truth {
            Label::X => p,
            Label::O => 1.0 - p,
        }
    }
}

fn normalized(grid: &BinGrid, xy: &[f64]) -> Vec<f64> {
    let n = (xy.len() / 2).max(1) as f64;
    hard_histogram(grid, xy)
        .into_iter()
        .map(|c| c / n)
        .collect()
}
