use mfkrig_core::rare_event::{crude_mc_oracle, event_probability, EnvironmentDistribution, EventSpec, Marginal};
use mfkrig_core::scenarios::g_1d;
use mfkrig_core::{
    fit_mle, Bounds, Dataset, DesignPoint, FitConfig, KernelParams, KrigingModel, MultiFidelityModel,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn env() -> EnvironmentDistribution {
    EnvironmentDistribution::new(vec![Marginal::Uniform { low: -5.0, high: 5.0 }], "").unwrap()
}

/// `P(exp(-(x/2)^2) >= 0.8)` for `x ~ U[-5, 5]`: the event is `|x| <= 2 sqrt(ln 1.25)`.
fn analytic_probability() -> f64 {
    2.0 * 2.0 * (1.0f64 / 0.8).ln().sqrt() / 10.0
}

fn dense_g_model() -> &'static MultiFidelityModel {
    static M: OnceLock<MultiFidelityModel> = OnceLock::new();
    M.get_or_init(|| {
        let xs: Vec<f64> = (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| g_1d(x)).collect();
        let layer = fit_mle(&Dataset::from_1d(&xs, &ys).unwrap(), &FitConfig::default()).unwrap();
        MultiFidelityModel::from_layers(vec!["g".into()], vec![layer]).unwrap()
    })
}

#[test]
fn analytic_value() {
    assert!((analytic_probability() - 0.188_952_290_830_975_53).abs() < 1e-15);
}

#[test]
fn crude_oracle_brackets_the_analytic_value() {
    let est = crude_mc_oracle(|x| g_1d(x[0]), &env(), &EventSpec::exceed(0.8), 1_000_000, 17).unwrap();
    assert!((est.value - analytic_probability()).abs() <= 3.0 * est.std_error, "{est:?}");
}

#[test]
fn dense_surrogate_agrees_with_oracle() {
    let model = dense_g_model();
    let spec = EventSpec::exceed(0.8);
    let sur = event_probability(model, &env(), &spec, 100_000, 3).unwrap();
    let orc = crude_mc_oracle(|x| g_1d(x[0]), &env(), &spec, 100_000, 3).unwrap();
    let se = sur.std_error.hypot(orc.std_error);
    let mut eps: f64 = 0.0;
    for i in 0..=1000 {
        let x = DesignPoint::scalar(-5.0 + 0.01 * i as f64);
        let p = model.predict(&x, 1).unwrap();
        eps = eps.max((p.mean - g_1d(x[0])).abs()).max(p.variance.sqrt());
    }
    assert!(eps < 1e-3, "surrogate error {eps}");
    assert!((sur.value - orc.value).abs() <= 3.0 * se + eps, "{sur:?} vs {orc:?}");
}

#[test]
fn near_zero_variance_reduces_to_the_indicator() {
    // tau2 so small that every standardized margin is effectively infinite
    let layer = KrigingModel::from_parts(
        Dataset::from_1d(&[-3.0, 0.0, 2.0], &[0.1, 0.9, 0.4]).unwrap(),
        Bounds::new(vec![-5.0], vec![5.0]).unwrap(),
        0.3,
        KernelParams::new(vec![4.0], 1e-280, 1e-8).unwrap(),
    )
    .unwrap();
    let model = MultiFidelityModel::from_layers(vec!["g".into()], vec![layer.clone()]).unwrap();
    let spec = EventSpec::exceed(0.5);
    let sur = event_probability(&model, &env(), &spec, 5000, 12).unwrap();
    let ind = crude_mc_oracle(|x| layer.mean(x).unwrap(), &env(), &spec, 5000, 12).unwrap();
    assert_eq!(sur.value, ind.value);
}

#[test]
fn reruns_are_bit_identical() {
    let spec = EventSpec::fall_below(0.3);
    let a = event_probability(dense_g_model(), &env(), &spec, 20_000, 99).unwrap();
    let b = event_probability(dense_g_model(), &env(), &spec, 20_000, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_samples, 20_000);
    assert_eq!(a.seed, 99);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let env2 = EnvironmentDistribution::new(
        vec![Marginal::Uniform { low: 0.0, high: 1.0 }, Marginal::Uniform { low: 0.0, high: 1.0 }],
        "",
    )
    .unwrap();
    assert!(event_probability(dense_g_model(), &env2, &EventSpec::exceed(0.0), 10, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimates_are_probabilities_and_directions_complement(gamma in -0.5f64..1.5, seed in 0u64..1000) {
        let up = event_probability(dense_g_model(), &env(), &EventSpec::exceed(gamma), 500, seed).unwrap();
        let down = event_probability(dense_g_model(), &env(), &EventSpec::fall_below(gamma), 500, seed).unwrap();
        for e in [&up, &down] {
            prop_assert!((0.0..=1.0).contains(&e.value));
            prop_assert!(e.std_error >= 0.0);
        }
        prop_assert!(up.value + down.value >= 1.0 - 1e-12);
    }
}
