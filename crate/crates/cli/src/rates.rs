use std::io::Write;

use anyhow::Result;
use fedspike_core::rates::{cov_bound, is_admissible, pca_bound, psi0_tilde, psi1_tilde, RateInputs};
use fedspike_core::{AggregationWeights, ClientParams, ModelConstants, PrivacyBudget, WeightScheme};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct ClientEntry {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RatesConfig {
    pub p: usize,
    pub r: usize,
    pub lambda: f64,
    pub sigma2: f64,
    #[serde(default = "default_scheme")]
    pub scheme: WeightScheme,
    pub clients: Vec<ClientEntry>,
}

fn default_scheme() -> WeightScheme {
    WeightScheme::Optimal
}

const HEADER: [&str; 11] =
    ["client", "n", "epsilon", "delta", "psi0_tilde", "psi1_tilde", "admissible", "pca_weight", "cov_weight", "pca_bound", "cov_bound"];

/// One row per client (bounds for that client alone) and a final `federated`
/// row with the bounds of the whole layout.
pub fn write_table(cfg: &RatesConfig, out: impl Write) -> Result<()> {
    let model = ModelConstants { p: cfg.p, r: cfg.r, lambda: cfg.lambda, sigma2: cfg.sigma2 };
    let params = cfg
        .clients
        .iter()
        .map(|c| Ok(ClientParams::new(c.n, PrivacyBudget::new(c.epsilon, c.delta)?)))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<RateInputs> =
        params.iter().map(|c| RateInputs::new(c.n, c.budget, cfg.p, cfg.r, cfg.lambda, cfg.sigma2)).collect();
    for inp in &inputs {
        inp.validate()?;
    }
    let weights = AggregationWeights::compute(&params, &model, cfg.scheme)?;

    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for (j, inp) in inputs.iter().enumerate() {
        let one = std::slice::from_ref(inp);
        w.write_record([
            j.to_string(),
            inp.n.to_string(),
            inp.epsilon.to_string(),
            inp.delta.to_string(),
            psi0_tilde(inp).to_string(),
            psi1_tilde(inp).to_string(),
            is_admissible(inp).to_string(),
            weights.pca_weights_w[j].to_string(),
            weights.cov_weights_v[j].to_string(),
            pca_bound(one)?.to_string(),
            cov_bound(one, cfg.lambda)?.to_string(),
        ])?;
    }
    let total: usize = inputs.iter().map(|i| i.n).sum();
    let mut last = vec![String::new(); HEADER.len()];
    last[0] = "federated".into();
    last[1] = total.to_string();
    last[6] = inputs.iter().all(is_admissible).to_string();
    last[9] = pca_bound(&inputs)?.to_string();
    last[10] = cov_bound(&inputs, cfg.lambda)?.to_string();
    w.write_record(&last)?;
    w.flush()?;
    Ok(())
}
