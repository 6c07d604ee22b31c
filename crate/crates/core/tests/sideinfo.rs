use mom_core::sideinfo::{
    assisted_response, evaluate_policy, fit_machine_baseline, generate_dataset, train_mom,
    HumanKind, SideInfoConfig,
};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn generator_matches_its_analytic_moments() {
    let data = generate_dataset(100_000, 42);
    let mean_xi = data.iter().map(|s| f64::from(s.x[0])).sum::<f64>() / data.len() as f64;
    // l1 ~ U(max(l0 - .3, 0), l0 + .3) has mean (E[max(l0 - .3, 0)] + .6) / 2,
    // and E[max(l0 - .3, 0)] = .1 * pdf(0) for l0 ~ N(.3, .1)
    let expected = 1.0 - (0.1 / (2.0 * std::f64::consts::PI).sqrt() + 0.6) / 2.0;
    assert!(
        (mean_xi - expected).abs() <= 0.01,
        "E[x_i] = {mean_xi}, expected {expected}"
    );

    let zeros: Vec<_> = data.iter().filter(|s| s.x[0] == 0 && s.x[1] == 0).collect();
    let p = zeros.iter().filter(|s| s.s == 0).count() as f64 / zeros.len() as f64;
    // s = 0 iff the N(0, .5) draw rounds below one half
    let oracle = Normal::new(0.0, 0.5).unwrap().cdf(0.5);
    assert!((oracle - 0.841).abs() < 1e-3);
    assert!(
        (p - oracle).abs() <= 0.01,
        "P(s=0 | x_i=x_r=0) = {p}, {} conditioning rows",
        zeros.len()
    );
}

#[test]
fn machine_baseline_uses_all_features() {
    let data = generate_dataset(1000, 0);
    let m = fit_machine_baseline(&data).unwrap();
    assert!(m.w.iter().all(|w| w.abs() > 0.05), "{m:?}");
}

#[test]
fn always_kind_recovers_the_outcome_weights() {
    let data = generate_dataset(1000, 1);
    let (train, test) = data.split_at(800);
    let fit = train_mom(train, HumanKind::Always, &SideInfoConfig::default(), 1).unwrap();
    let w = fit.model.w;
    assert!(w[0].abs() <= 0.05 && w[1].abs() <= 0.05, "{w:?}");
    assert!(
        (w[2] - 1.0).abs() <= 0.05 && (w[3] - 1.0).abs() <= 0.05,
        "{w:?}"
    );
    let acc = evaluate_policy(
        |s| assisted_response(HumanKind::Always, &fit.model, s),
        test,
        3.5,
    )
    .unwrap();
    assert!(acc >= 0.995, "{acc}");
}

#[test]
fn never_kind_matches_machine_only() {
    let data = generate_dataset(1000, 2);
    let (train, test) = data.split_at(800);
    let fit = train_mom(train, HumanKind::Never, &SideInfoConfig::default(), 2).unwrap();
    let mom = evaluate_policy(
        |s| assisted_response(HumanKind::Never, &fit.model, s),
        test,
        3.5,
    )
    .unwrap();
    let machine = fit_machine_baseline(train).unwrap();
    let base = evaluate_policy(|s| machine.predict(&s.xf()), test, 3.5).unwrap();
    assert!((mom - base).abs() <= 0.03, "M∘M {mom} vs machine {base}");
}

#[test]
fn training_is_deterministic() {
    let data = generate_dataset(300, 3);
    let config = SideInfoConfig::default();
    let a = train_mom(&data, HumanKind::Or, &config, 5).unwrap();
    let b = train_mom(&data, HumanKind::Or, &config, 5).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.metrics, b.metrics);
}
