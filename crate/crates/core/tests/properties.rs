use mom_core::histogram::{soft_histogram, BinGrid};
use mom_core::loanrep::{
    constraint_penalty, knee_index, shuffle_within_predictions, AvatarEmbedding, ChannelRange,
    CHANNELS, Z_DIM,
};
use mom_core::mom::select_queries;
use mom_core::nn::{Activation, Layer, Network};
use mom_core::sideinfo::{generate_dataset, human_respond, switch, HumanKind};
use mom_core::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn x_bits() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0u8..2).prop_map(|a| a.map(f64::from))
}

fn weights() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-3.0..3.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), rows in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(
            vec![3],
            vec![Layer::dense(3, 4), Layer::act(Activation::Relu), Layer::dense(4, 1), Layer::act(Activation::Sigmoid)],
            &mut rng,
        ).unwrap();
        let x = Tensor::new(vec![rows, 3], (0..rows * 3).map(|i| (i as f64 * 0.7 + seed as f64 % 5.0).sin()).collect()).unwrap();
        prop_assert_eq!(net.predict(&x).unwrap(), net.clone().predict(&x).unwrap());
    }

    #[test]
    fn soft_histogram_conserves_mass_and_ignores_order(
        pts in prop::collection::vec((-2.5..2.5f64, -2.5..2.5f64), 1..30),
        bandwidth in 0.05..1.5f64,
        rot in 0usize..30,
    ) {
        let grid = BinGrid::default();
        let flat: Vec<f64> = pts.iter().flat_map(|&(a, b)| [a, b]).collect();
        let mut rotated = pts.clone();
        rotated.rotate_left(rot % pts.len());
        let flat_r: Vec<f64> = rotated.iter().flat_map(|&(a, b)| [a, b]).collect();
        let h = soft_histogram(&grid, &flat, bandwidth);
        let hr = soft_histogram(&grid, &flat_r, bandwidth);
        prop_assert!((h.iter().sum::<f64>() - pts.len() as f64).abs() < 1e-9);
        prop_assert!(h.iter().all(|&v| v >= 0.0));
        for (a, b) in h.iter().zip(&hr) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn select_queries_is_a_sample_without_replacement(n in 1usize..200, frac in 0.0..1.0f64, seed in any::<u64>()) {
        let k = ((n as f64 * frac) as usize).max(1);
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ChaCha8Rng::seed_from_u64(seed);
        let q = select_queries(n, k, &mut a).unwrap();
        prop_assert_eq!(&q, &select_queries(n, k, &mut b).unwrap());
        let mut sorted = q.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        prop_assert!(q.iter().all(|&i| i < n));
    }

    #[test]
    fn never_ignores_side_information(x in x_bits(), w in weights()) {
        let v = human_respond(HumanKind::Never, &x, &w, 0);
        for s in 1..4 {
            prop_assert_eq!(human_respond(HumanKind::Never, &x, &w, s), v);
        }
    }

    #[test]
    fn coarse_takes_at_most_two_values(x in x_bits(), w in weights()) {
        let mut vals: Vec<f64> = (0..4).map(|s| human_respond(HumanKind::Coarse, &x, &w, s)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        prop_assert!(vals.len() <= 2);
    }

    #[test]
    fn larger_income_and_race_weights_lower_the_switch(w in weights(), k in 1.05..4.0f64) {
        prop_assume!(w[0].abs().max(w[1].abs()) > 1e-3);
        let mut up = w;
        up[0] *= k;
        up[1] *= k;
        let (a, b) = (switch(&w), switch(&up));
        // saturated sigmoids compare equal in floating point
        prop_assert!(b < a || (a - b).abs() < 1e-12 && a < 1e-12);
    }

    #[test]
    fn generated_outcomes_add_up(n in 1usize..300, seed in any::<u64>()) {
        for s in generate_dataset(n, seed) {
            prop_assert_eq!(s.y, s.x[2] + s.x[3] + s.s);
            prop_assert!(s.s <= 3);
            prop_assert_eq!(s.y_bin(), s.y >= 4);
        }
    }

    #[test]
    fn avatar_channels_stay_in_range(seed in any::<u64>(), scale in 0.1..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = AvatarEmbedding::new(4, 8, 0.5, 1.0, &mut rng).unwrap();
        let x = Tensor::new(vec![6, 4], (0..24).map(|i| scale * ((i as f64 + seed as f64 % 7.0) * 1.3).sin()).collect()).unwrap();
        let z = phi.encode(&x).unwrap();
        for i in 0..z.rows() {
            for (c, &v) in CHANNELS.iter().zip(z.row(i)) {
                match c.range {
                    ChannelRange::Bipolar => prop_assert!((-1.0..=1.0).contains(&v)),
                    ChannelRange::Positive => prop_assert!((0.0..=1.0).contains(&v)),
                }
            }
        }
    }

    #[test]
    fn constraint_penalty_is_nonnegative(z in prop::collection::vec(-1.0..1.0f64, Z_DIM)) {
        prop_assert!(constraint_penalty(&z) >= 0.0);
    }

    #[test]
    fn shuffle_preserves_predicted_labels(
        pred in prop::collection::vec(0.0..1.0f64, 1..60),
        seed in any::<u64>(),
    ) {
        let n = pred.len();
        let z = Tensor::new(vec![n, 2], (0..2 * n).map(|i| i as f64).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, src) = shuffle_within_predictions(&z, &pred, &mut rng).unwrap();
        let mut seen = src.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for (i, &j) in src.iter().enumerate() {
            prop_assert_eq!(pred[i] > 0.5, pred[j] > 0.5);
            prop_assert_eq!(s.row(i), z.row(j));
        }
    }

    #[test]
    fn knee_lies_on_the_curve(pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..12)) {
        let k = knee_index(&pts).unwrap();
        prop_assert!(k < pts.len());
    }
}
