use std::collections::HashSet;

use mom_core::gradcheck;
use mom_core::histogram::{soft_histogram, BinGrid};
use mom_core::mom::select_queries;
use mom_core::pointcloud::{
    orthogonality_penalty, random_rotation, PointcloudConfig, PointcloudData, PointcloudSession,
};
use mom_core::sideinfo::generate_dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Largest relative gradient error accepted.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run(seeds: u64, seed: u64) -> Result<Report, Box<dyn std::error::Error>> {
    let mut checks = Vec::new();
    let mut worst = (0.0f64, String::new());
    let mut count = 0;
    for s in seed..seed + seeds {
        for case in gradcheck::suite(s)? {
            count += 1;
            if case.error.is_nan() || case.error > worst.0 {
                worst = (case.error, format!("{} seed {s}", case.name));
            }
        }
    }
    checks.push(Check {
        name: "gradients".into(),
        passed: worst.0 <= GRAD_TOLERANCE,
        detail: format!(
            "{count} cases, worst {:.2e} ({}), limit {GRAD_TOLERANCE:.0e}",
            worst.0, worst.1
        ),
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = BinGrid::default();
    let mut mass_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let xy: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-2.5..2.5)).collect();
        let h = soft_histogram(&grid, &xy, rng.random_range(0.05..1.5));
        mass_err = mass_err.max((h.iter().sum::<f64>() - n as f64).abs());
    }
    checks.push(Check {
        name: "soft_histogram_mass".into(),
        passed: mass_err < 1e-9,
        detail: format!("largest mass error {mass_err:.1e} over 100 clouds"),
    });

    let picked = select_queries(75_933, 200, &mut rng)?;
    let distinct = picked.iter().collect::<HashSet<_>>().len();
    checks.push(Check {
        name: "query_selection".into(),
        passed: distinct == 200 && picked.iter().all(|&i| i < 75_933),
        detail: format!("{distinct} distinct of 200"),
    });

    let samples = generate_dataset(10_000, seed);
    let bad = samples
        .iter()
        .filter(|s| s.y != s.x[2] + s.x[3] + s.s || s.s > 3)
        .count();
    checks.push(Check {
        name: "sideinfo_outcome".into(),
        passed: bad == 0,
        detail: format!("{bad} of 10000 samples violate y = x_c + x_d + s"),
    });

    let penalty = orthogonality_penalty(&random_rotation(3, &mut rng));
    checks.push(Check {
        name: "rotation_orthogonal".into(),
        passed: penalty < 1e-12,
        detail: format!("penalty {penalty:.1e}"),
    });

    let mut config = PointcloudConfig {
        clouds: 60,
        ..PointcloudConfig::default()
    };
    config.mom.queries_per_round = 5;
    let data = PointcloudData::build(&config)?;
    let mut session = PointcloudSession::new(config, &data, seed)?;
    session.queries(&data)?;
    let doc = serde_json::to_string(&session)?;
    let again = serde_json::to_string(&serde_json::from_str::<PointcloudSession>(&doc)?)?;
    checks.push(Check {
        name: "session_roundtrip".into(),
        passed: doc == again,
        detail: format!("{} byte document", doc.len()),
    });

    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(Report {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
