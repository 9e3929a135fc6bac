use fedspike_core::experiments::{run_realdata, Method, RealdataSpec};
use fedspike_core::{psi0_tilde, sample, RateInputs, SpikedModel};

/// Synthetic stand-in for a 251-variable, 181-sample expression matrix.
fn stand_in(seed: u64) -> fedspike_core::Dataset {
    let model = SpikedModel::with_random_basis(251, vec![400.0, 300.0, 200.0, 150.0, 100.0], 1.0, seed).unwrap();
    sample(&model, 181, seed + 1).unwrap()
}

#[test]
fn weighted_aggregation_explains_at_least_as_much_as_equal_weights() {
    let data = stand_in(2024);
    let mut wins = 0;
    let mut log = Vec::new();
    for shuffle in 0..25 {
        let mut spec = RealdataSpec::standard(251);
        spec.seed = shuffle;
        spec.methods = vec![Method::Fedspike, Method::Equal];
        let report = run_realdata(&data, &spec).unwrap();
        let (main, equal) = (report.score(Method::Fedspike).unwrap(), report.score(Method::Equal).unwrap());
        if main >= equal {
            wins += 1;
        }
        log.push((main, equal));
    }
    assert!(wins >= 15, "{wins}/25: {log:?}");
}

#[test]
fn report_is_deterministic_and_complete() {
    let data = stand_in(7);
    let mut spec = RealdataSpec::standard(251);
    spec.methods = vec![Method::Fedspike, Method::Equal, Method::Reference, Method::Oja];
    let a = run_realdata(&data, &spec).unwrap();
    assert_eq!(a, run_realdata(&data, &spec).unwrap());
    assert_eq!(a.scores.len(), 4);
    assert_eq!(a.client_plugins.len(), 2);
    assert_eq!(a.pca_weights.len(), 2);
    // Weights are the clients' own reported Ψ̃₀⁻², so they follow each client's plug-ins.
    let raw: Vec<f64> = [130, 51]
        .iter()
        .zip(&a.client_plugins)
        .map(|(&n, e)| psi0_tilde(&RateInputs::new(n, spec.budget, 251, 5, e.lambda_hat, e.sigma2_hat)).powi(-2))
        .collect();
    let total: f64 = raw.iter().sum();
    for (w, r) in a.pca_weights.iter().zip(&raw) {
        assert!((w - r / total).abs() < 1e-12);
    }
    let no_subtract = RealdataSpec { plugins: fedspike_core::experiments::PluginConfig { subtract_sigma: false, ..spec.plugins }, ..spec.clone() };
    let b = run_realdata(&data, &no_subtract).unwrap();
    for (x, y) in a.client_plugins.iter().zip(&b.client_plugins) {
        assert!((y.lambda_hat - x.lambda_hat - x.sigma2_hat).abs() < 1e-9);
    }
}
