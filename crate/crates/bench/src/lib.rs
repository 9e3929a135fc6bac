//! Fixtures shared by the benchmarks.

use fedspike_core::{sample, ClientConfig, Dataset, LocalClient, ModelConstants, PrivacyBudget, Server, ServerConfig, SpikedModel, WeightScheme};
use nalgebra::DMatrix;

pub fn spiked_data(p: usize, r: usize, n: usize, seed: u64) -> (SpikedModel, Dataset) {
    let model = SpikedModel::with_random_basis(p, vec![10.0; r], 1.0, seed).expect("valid model");
    let data = sample(&model, n, seed + 1).expect("valid sample");
    (model, data)
}

pub fn symmetric(p: usize, seed: u64) -> DMatrix<f64> {
    let (_, data) = spiked_data(p, 1, 2 * p, seed);
    fedspike_core::sample_covariance(&data)
}

/// `m` clients of size `n` at `ε = 0.5`, `δ = 0.1` and the matching server.
pub fn session(p: usize, r: usize, m: usize, n: usize) -> (Vec<LocalClient>, Server) {
    let model = SpikedModel::with_random_basis(p, vec![10.0; r], 1.0, 1).expect("valid model");
    let clients = (0..m)
        .map(|j| {
            let data = sample(&model, n, 100 + j as u64).expect("valid sample");
            let cfg = ClientConfig {
                client_id: format!("c{j:03}"),
                budget: PrivacyBudget { epsilon: 0.5, delta: 0.1 },
                rank_r: r,
                lambda_plugin: 10.0,
                sigma2_plugin: 1.0,
                seed: j as u64,
                report_weight: false,
            };
            LocalClient::new(&data, cfg).expect("valid client")
        })
        .collect();
    let server = Server::new(ServerConfig {
        model: ModelConstants { p, r, lambda: 10.0, sigma2: 1.0 },
        scheme: WeightScheme::Optimal,
        rate_proportional_weights: false,
        psd_clip: false,
    })
    .expect("valid server");
    (clients, server)
}
