use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{ChannelRange, CHANNELS, Z_DIM};
use crate::tensor::{sigmoid, Tensor};

/// Stand-in for a pool of loan officers looking at avatars: approves when
/// `sigmoid(theta . (z - center))` exceeds one half, where `center` is the
/// neutral face, and flips each answer with probability `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRespondent {
    pub theta: Vec<f64>,
    pub bias: f64,
    pub epsilon: f64,
}

impl SimulatedRespondent {
    /// `theta ~ N(0, I)`, centered on the neutral face.
    pub fn random(epsilon: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..Z_DIM).map(|_| rng.sample(StandardNormal)).collect();
        let bias = -CHANNELS
            .iter()
            .zip(&theta)
            .map(|(c, t)| match c.range {
                ChannelRange::Bipolar => 0.0,
                ChannelRange::Positive => 0.5 * t,
            })
            .sum::<f64>();
        Self {
            theta,
            bias,
            epsilon,
        }
    }

    pub fn score(&self, z: &[f64]) -> f64 {
        sigmoid(self.bias + z.iter().zip(&self.theta).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn prob_approve(&self, z: &[f64]) -> f64 {
        if self.score(z) > 0.5 {
            1.0 - self.epsilon
        } else {
            self.epsilon
        }
    }

    pub fn respond<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> u8 {
        u8::from(rng.random::<f64>() < self.prob_approve(z))
    }

    /// Fraction approving among `votes` independent answers.
    pub fn poll<R: Rng + ?Sized>(&self, z: &[f64], votes: usize, rng: &mut R) -> f64 {
        let votes = votes.max(1);
        (0..votes)
            .map(|_| f64::from(self.respond(z, rng)))
            .sum::<f64>()
            / votes as f64
    }

    /// Expected fraction of correct single decisions on the rows of `z`.
    pub fn expected_accuracy(&self, z: &Tensor, y: &[f64]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        (0..z.rows())
            .zip(y)
            .map(|(i, &t)| {
                let p = self.prob_approve(z.row(i));
                if t > 0.5 {
                    p
                } else {
                    1.0 - p
                }
            })
            .sum::<f64>()
            / y.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_is_deterministic() {
        let r = SimulatedRespondent::random(0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z: Vec<f64> = r.theta.iter().map(|t| t.signum() * 0.9).collect();
        assert!(r.score(&z) > 0.5);
        assert!((0..100).all(|_| r.respond(&z, &mut rng) == 1));
    }

    #[test]
    fn half_noise_is_a_coin() {
        let r = SimulatedRespondent::random(0.5, 1);
        assert_eq!(r.prob_approve(&[0.3; Z_DIM]), 0.5);
        assert_eq!(r.prob_approve(&[-0.3; Z_DIM]), 0.5);
    }

    #[test]
    fn neutral_face_sits_on_the_boundary() {
        let r = SimulatedRespondent::random(0.1, 3);
        let neutral: Vec<f64> = CHANNELS
            .iter()
            .map(|c| match c.range {
                ChannelRange::Bipolar => 0.0,
                ChannelRange::Positive => 0.5,
            })
            .collect();
        assert!((r.score(&neutral) - 0.5).abs() < 1e-12);
    }
}
