use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::sigmoid;

/// Feature order used throughout: income, race, cardiovascular, diabetes.
pub const FEATURES: [&str; 4] = ["x_i", "x_r", "x_c", "x_d"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    /// `(x_i, x_r, x_c, x_d)`, each 0 or 1.
    pub x: [u8; 4],
    /// Side information in `0..=3`, seen only by the decision maker.
    pub s: u8,
    /// `x_c + x_d + s`.
    pub y: u8,
}

impl Sample {
    pub fn y_bin(&self) -> bool {
        self.y > 3
    }

    pub fn xf(&self) -> [f64; 4] {
        self.x.map(f64::from)
    }
}

/// Draws `n` samples:
/// `l0 ~ N(.3, .1)`, `l1, l2 ~ U(max(l0 - .3, 0), min(l0 + .3, 1))`,
/// `x_i ~ B(1 - l1)`, `x_r ~ B(1 - l2)`, `l3 ~ U(.5, .7)`,
/// `x_c ~ B(min(l3 + x_i, 1))`, `x_d ~ B(min(l3 + x_r, 1))`,
/// `s = clamp(round(N(x_i + x_r, .5)), 0, 3)`; the second normal
/// parameter is a standard deviation.
pub fn generate_dataset(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l0_dist = Normal::new(0.3, 0.1).expect("valid sd");
    (0..n)
        .map(|_| {
            let l0: f64 = l0_dist.sample(&mut rng);
            let (lo, hi) = ((l0 - 0.3).max(0.0), (l0 + 0.3).min(1.0));
            let uniform = |rng: &mut ChaCha8Rng| {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            };
            let l1 = uniform(&mut rng);
            let l2 = uniform(&mut rng);
            let xi = rng.random_bool((1.0 - l1).clamp(0.0, 1.0)) as u8;
            let xr = rng.random_bool((1.0 - l2).clamp(0.0, 1.0)) as u8;
            let l3: f64 = rng.random_range(0.5..0.7);
            let xc = rng.random_bool((l3 + f64::from(xi)).min(1.0)) as u8;
            let xd = rng.random_bool((l3 + f64::from(xr)).min(1.0)) as u8;
            let s_cont = Normal::new(f64::from(xi + xr), 0.5)
                .expect("valid sd")
                .sample(&mut rng);
            let s = s_cont.round().clamp(0.0, 3.0) as u8;
            Sample {
                x: [xi, xr, xc, xd],
                s,
                y: xc + xd + s,
            }
        })
        .collect()
}

/// How the simulated decision maker folds side information into advice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanKind {
    Or,
    Coarse,
    Never,
    Always,
}

impl HumanKind {
    pub const ALL: [HumanKind; 4] = [
        HumanKind::Or,
        HumanKind::Coarse,
        HumanKind::Never,
        HumanKind::Always,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HumanKind::Or => "or",
            HumanKind::Coarse => "coarse",
            HumanKind::Never => "never",
            HumanKind::Always => "always",
        }
    }
}

impl fmt::Display for HumanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HumanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HumanKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown human model {s:?}")))
    }
}

/// Propensity to use side information given advice weights `w`: falls as
/// weight is put on income or race.
pub fn switch(w: &[f64; 4]) -> f64 {
    sigmoid(1.0 / w[0].abs().max(w[1].abs()).max(1e-4) - 2.0)
}

/// The decision maker's risk estimate given features, advice weights and
/// side information.
pub fn human_respond(kind: HumanKind, x: &[f64; 4], w: &[f64; 4], s: u8) -> f64 {
    let advice: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    let s = f64::from(s);
    match kind {
        HumanKind::Always => advice + s,
        HumanKind::Never => advice,
        HumanKind::Or => advice + switch(w) * s,
        HumanKind::Coarse => advice + switch(w) * if s >= 2.0 { 2.0 } else { 0.0 },
    }
}
