use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Method;
use crate::baselines::{fed_dp_oja, OjaConfig};
use crate::client::{ClientConfig, ClientState};
use crate::dp_mechanism::PrivacyBudget;
use crate::error::{Error, Result};
use crate::protocol::{encode, run_federated_session, InProcessTransport, LocalClient, SessionOptions};
use crate::seed::{derive_seed, rng_from_seed};
use crate::server::{aggregate_reference, equal_weights, ModelConstants, Server, ServerConfig, WeightScheme};
use crate::spectral::{explained_variance, sample_covariance, sym_eig};
use crate::spiked_model::Dataset;

/// Which sample eigenvalues feed the plug-in estimates (1-indexed, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginConfig {
    pub top_k: usize,
    pub tail: (usize, usize),
    /// Report `mean(top_k) − σ̂²` rather than the raw top eigenvalue mean.
    pub subtract_sigma: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimate {
    pub lambda_hat: f64,
    pub sigma2_hat: f64,
}

/// `σ̂²` is the mean of the tail eigenvalues of the sample covariance and `λ̂`
/// the mean of the `top_k` largest, optionally minus `σ̂²`.
pub fn estimate_plugins(data: &Dataset, cfg: &PluginConfig) -> Result<PluginEstimate> {
    let p = data.dim();
    let (a, b) = cfg.tail;
    if a == 0 || a > b || b > p {
        return Err(Error::param("tail", format!("range ({a}, {b}) is not within [1, {p}]")));
    }
    if cfg.top_k == 0 || cfg.top_k > p {
        return Err(Error::param("top_k", format!("{} is not within [1, {p}]", cfg.top_k)));
    }
    let values = sym_eig(&sample_covariance(data))?.values;
    let sigma2_hat = values.rows(a - 1, b - a + 1).mean();
    if !(sigma2_hat > 0.0) {
        return Err(Error::Degenerate(format!("tail eigenvalues {a}..={b} are all zero")));
    }
    let top = values.rows(0, cfg.top_k).mean();
    let lambda_hat = if cfg.subtract_sigma { top - sigma2_hat } else { top };
    Ok(PluginEstimate { lambda_hat, sigma2_hat })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealdataSpec {
    /// Client sizes, assigned in order after shuffling.
    pub sizes: Vec<usize>,
    pub rank: usize,
    pub budget: PrivacyBudget,
    pub seed: u64,
    pub plugins: PluginConfig,
    /// Subtract the pooled mean of every variable before splitting.
    pub center: bool,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub rate_proportional_weights: bool,
    #[serde(default)]
    pub psd_clip: bool,
}

impl RealdataSpec {
    /// Two clients of 130 and 51 samples, `r = 5`, `ε = 0.4`, `δ = 0.1`,
    /// `λ̂` from the top three eigenvalues and `σ̂²` from eigenvalues 51 to `p`.
    pub fn standard(p: usize) -> Self {
        Self {
            sizes: vec![130, 51],
            rank: 5,
            budget: PrivacyBudget { epsilon: 0.4, delta: 0.1 },
            seed: 0,
            plugins: PluginConfig { top_k: 3, tail: (51.min(p), p), subtract_sigma: true },
            center: true,
            methods: vec![Method::Fedspike, Method::Equal, Method::Reference],
            rate_proportional_weights: false,
            psd_clip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub explained_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealdataReport {
    pub scores: Vec<MethodScore>,
    pub client_plugins: Vec<PluginEstimate>,
    /// Constants used by the server: size-weighted means of the client plug-ins.
    pub server_lambda: f64,
    pub server_sigma2: f64,
    pub pca_weights: Vec<f64>,
    /// SHA-256 of the encoded session transcript, when the main method ran.
    pub transcript_digest: Option<String>,
}

impl RealdataReport {
    pub fn score(&self, method: Method) -> Option<f64> {
        self.scores.iter().find(|s| s.method == method).map(|s| s.explained_variance)
    }
}

fn centered(data: &Dataset) -> Result<Dataset> {
    let x = data.samples();
    let means = x.column_mean();
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= &means;
    }
    Dataset::new(c)
}

/// Shuffles, splits and runs every requested method, scoring each aggregated
/// basis by its explained variance on the pooled client data.
pub fn run_realdata(data: &Dataset, spec: &RealdataSpec) -> Result<RealdataReport> {
    let (p, total) = (data.dim(), data.len());
    let r = spec.rank;
    if spec.sizes.is_empty() || spec.methods.is_empty() {
        return Err(Error::Spec("need at least one client and one method".into()));
    }
    if r == 0 || r > p {
        return Err(Error::Spec(format!("rank {r} is not in [1, {p}]")));
    }
    if let Some(&n) = spec.sizes.iter().find(|&&n| n < r.max(2)) {
        return Err(Error::Spec(format!("client size {n} is below the minimum {}", r.max(2))));
    }
    let needed: usize = spec.sizes.iter().sum();
    if needed > total {
        return Err(Error::Spec(format!("split needs {needed} samples but the data has {total}")));
    }
    spec.budget.validate().map_err(|e| Error::Spec(e.to_string()))?;

    let data = if spec.center { centered(data)? } else { data.clone() };
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(spec.seed, "realdata.shuffle")));
    let pooled = data.select(&order[..needed])?;

    let mut start = 0;
    let mut parts = Vec::with_capacity(spec.sizes.len());
    for &n in &spec.sizes {
        parts.push(data.select(&order[start..start + n])?);
        start += n;
    }

    let mut plugins = Vec::with_capacity(parts.len());
    let mut states = Vec::with_capacity(parts.len());
    for (j, part) in parts.iter().enumerate() {
        let est = estimate_plugins(part, &spec.plugins)?;
        if !(est.lambda_hat > 0.0) {
            return Err(Error::Degenerate(format!("client {j} has non-positive signal estimate {}", est.lambda_hat)));
        }
        let cfg = ClientConfig {
            client_id: format!("client-{j:04}"),
            budget: spec.budget,
            rank_r: r,
            lambda_plugin: est.lambda_hat,
            sigma2_plugin: est.sigma2_hat,
            seed: derive_seed(spec.seed, &format!("realdata.client.{j}.noise")),
            report_weight: true,
        };
        states.push(ClientState::new(part, cfg)?);
        plugins.push(est);
    }
    let weight_sum = needed as f64;
    let server_lambda = parts.iter().zip(&plugins).map(|(d, e)| d.len() as f64 * e.lambda_hat).sum::<f64>() / weight_sum;
    let server_sigma2 = parts.iter().zip(&plugins).map(|(d, e)| d.len() as f64 * e.sigma2_hat).sum::<f64>() / weight_sum;
    let model = ModelConstants { p, r, lambda: server_lambda, sigma2: server_sigma2 };
    let server_for = |scheme| {
        Server::new(ServerConfig { model, scheme, rate_proportional_weights: spec.rate_proportional_weights, psd_clip: spec.psd_clip })
    };

    let mut scores = Vec::new();
    let mut pca_weights = Vec::new();
    let mut transcript_digest = None;
    for &method in &spec.methods {
        let u_hat: DMatrix<f64> = match method {
            Method::Fedspike => {
                let clients: Vec<LocalClient> = states.iter().cloned().map(LocalClient::from_state).collect();
                let outcome = run_federated_session(
                    &clients,
                    &server_for(WeightScheme::Optimal)?,
                    &InProcessTransport::new(),
                    &SessionOptions::default(),
                )?;
                let mut hasher = Sha256::new();
                for entry in &outcome.transcript {
                    hasher.update(encode(&entry.message)?);
                }
                transcript_digest = Some(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect());
                pca_weights = outcome.weights.pca_weights_w.clone();
                outcome.u_hat
            }
            Method::Equal => {
                let msgs = states.iter().map(|s| s.private_projector()).collect::<Result<Vec<_>>>()?;
                server_for(WeightScheme::Equal)?.aggregate(&msgs)?.u_hat
            }
            Method::Reference => {
                let raw = states.iter().map(|s| s.noisy_projector()).collect::<Result<Vec<_>>>()?;
                aggregate_reference(&raw, &equal_weights(raw.len())?, r)?
            }
            Method::Oja => {
                let cfg = OjaConfig::for_model(p, r, server_lambda, server_sigma2);
                fed_dp_oja(&parts, &cfg, &vec![spec.budget; parts.len()], derive_seed(spec.seed, "realdata.oja"))?
            }
        };
        scores.push(MethodScore { method, explained_variance: explained_variance(&u_hat, &pooled)? });
    }
    Ok(RealdataReport { scores, client_plugins: plugins, server_lambda, server_sigma2, pca_weights, transcript_digest })
}
