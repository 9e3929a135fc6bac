//! Central aggregation: weights, the weighted projector average, and the
//! covariance assembled from the clients' eigenvalue blocks.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dp_mechanism::PrivacyBudget;
use crate::error::{Error, Result};
use crate::protocol::{EigenvalueMessage, ProjectorMessage, SYMMETRY_TOL};
use crate::rates::{psi0_tilde, RateInputs};
use crate::spectral::{check_rank, svd_r, sym_eig, symmetrize};

/// How the server weighs client releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w_k ∝ Ψ̃₀⁻²` and `v_k` from the covariance rate.
    Optimal,
    /// `w_k ∝ [sqrt(p/n_k) + p/(n_k ε_k)·sqrt((r + ln n_k) ln(2.5/δ_k))]⁻²`.
    DataIndependent,
    Equal,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Optimal => "optimal",
            WeightScheme::DataIndependent => "data_independent",
            WeightScheme::Equal => "equal",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(WeightScheme::Optimal),
            "data_independent" | "data-independent" => Ok(WeightScheme::DataIndependent),
            "equal" => Ok(WeightScheme::Equal),
            other => Err(Error::param("scheme", format!("unknown weight scheme `{other}`"))),
        }
    }
}

/// Sample size and budget of one client, as seen by the server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientParams {
    pub n: usize,
    pub budget: PrivacyBudget,
    /// Client-computed unnormalised weight; used by the optimal scheme when
    /// every client reports one.
    #[serde(default)]
    pub reported_weight: Option<f64>,
}

impl ClientParams {
    pub fn new(n: usize, budget: PrivacyBudget) -> Self {
        Self { n, budget, reported_weight: None }
    }
}

impl From<&ProjectorMessage> for ClientParams {
    fn from(m: &ProjectorMessage) -> Self {
        ClientParams { n: m.n, budget: m.budget(), reported_weight: m.reported_weight }
    }
}

/// Model constants the server needs for weighting and assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub p: usize,
    pub r: usize,
    pub lambda: f64,
    pub sigma2: f64,
}

impl ModelConstants {
    fn rate_inputs(&self, c: &ClientParams) -> RateInputs {
        RateInputs::new(c.n, c.budget, self.p, self.r, self.lambda, self.sigma2)
    }
}

/// PCA weights `w` and covariance weights `v`, one entry per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub pca_weights_w: Vec<f64>,
    pub cov_weights_v: Vec<f64>,
    pub scheme: WeightScheme,
}

impl AggregationWeights {
    pub fn compute(clients: &[ClientParams], model: &ModelConstants, scheme: WeightScheme) -> Result<Self> {
        let pca_weights_w = pca_weights(clients, model, scheme)?;
        let cov_weights_v = match scheme {
            WeightScheme::Equal => equal_weights(clients.len())?,
            _ => cov_weights(clients, model)?,
        };
        Ok(Self { pca_weights_w, cov_weights_v, scheme })
    }

    pub fn len(&self) -> usize {
        self.pca_weights_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pca_weights_w.is_empty()
    }
}

fn normalize(raw: Vec<f64>) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::param("clients", "at least one client"));
    }
    if raw.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::param("weights", "unnormalised weights must be positive and finite"));
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

pub fn equal_weights(m: usize) -> Result<Vec<f64>> {
    normalize(vec![1.0; m])
}

fn validate_clients(clients: &[ClientParams]) -> Result<()> {
    for c in clients {
        c.budget.validate()?;
        if c.n < 2 {
            return Err(Error::param("n", "each client needs n ≥ 2"));
        }
    }
    Ok(())
}

/// Bracketed per-client rate of the data-independent scheme.
fn data_independent_rate(c: &ClientParams, p: usize, r: usize) -> f64 {
    let (n, p, r) = (c.n as f64, p as f64, r as f64);
    (p / n).sqrt() + p / (n * c.budget.epsilon) * ((r + n.ln()) * c.budget.log_factor()).sqrt()
}

/// PCA aggregation weights for the given scheme. The optimal scheme uses the
/// client-reported weights when every client sent one.
pub fn pca_weights(clients: &[ClientParams], model: &ModelConstants, scheme: WeightScheme) -> Result<Vec<f64>> {
    validate_clients(clients)?;
    match scheme {
        WeightScheme::Equal => equal_weights(clients.len()),
        WeightScheme::Optimal => {
            let reported: Option<Vec<f64>> = clients.iter().map(|c| c.reported_weight).collect();
            match reported {
                Some(w) => normalize(w),
                None if clients.iter().any(|c| c.reported_weight.is_some()) => {
                    Err(Error::param("reported_weight", "either every client or no client may report a weight"))
                }
                None => normalize(clients.iter().map(|c| psi0_tilde(&model.rate_inputs(c)).powi(-2)).collect()),
            }
        }
        WeightScheme::DataIndependent => {
            normalize(clients.iter().map(|c| data_independent_rate(c, model.p, model.r).powi(-2)).collect())
        }
    }
}

/// Data-independent weights proportional to the bracketed rate itself rather
/// than its inverse square. Kept only for comparison runs.
pub fn pca_weights_rate_proportional(clients: &[ClientParams], model: &ModelConstants) -> Result<Vec<f64>> {
    validate_clients(clients)?;
    normalize(clients.iter().map(|c| data_independent_rate(c, model.p, model.r)).collect())
}

/// Covariance weights
/// `v_j ∝ ((λ² + σ⁴)/n_j + (8/ε_j²) ln(2.5/δ_j)(λ²(r + ln n_j)² + σ⁴p²)/n_j²)⁻¹`.
pub fn cov_weights(clients: &[ClientParams], model: &ModelConstants) -> Result<Vec<f64>> {
    validate_clients(clients)?;
    let (l2, s4) = (model.lambda * model.lambda, model.sigma2 * model.sigma2);
    let (p, r) = (model.p as f64, model.r as f64);
    normalize(
        clients
            .iter()
            .map(|c| {
                let n = c.n as f64;
                let privacy = 8.0 / c.budget.epsilon.powi(2)
                    * c.budget.log_factor()
                    * (l2 * (r + n.ln()).powi(2) + s4 * p * p)
                    / (n * n);
                1.0 / ((l2 + s4) / n + privacy)
            })
            .collect(),
    )
}

fn check_bases<'a>(bases: impl Iterator<Item = &'a DMatrix<f64>>) -> Result<(usize, usize)> {
    let mut shape = None;
    for u in bases {
        match shape {
            None => shape = Some(u.shape()),
            Some(s) if s != u.shape() => {
                return Err(Error::Dimension(format!("basis shapes {s:?} and {:?} differ", u.shape())))
            }
            _ => {}
        }
    }
    shape.ok_or_else(|| Error::param("messages", "at least one message"))
}

/// `svd_r(Σ_j w_j Û_jÛ_jᵀ)` with weights taken in message order.
pub fn aggregate_projectors(messages: &[ProjectorMessage], weights: &[f64]) -> Result<DMatrix<f64>> {
    let (p, r) = check_bases(messages.iter().map(|m| &m.u_hat))?;
    if weights.len() != messages.len() {
        return Err(Error::Dimension(format!("{} weights for {} messages", weights.len(), messages.len())));
    }
    let mut acc = DMatrix::zeros(p, p);
    for (m, &w) in messages.iter().zip(weights) {
        acc.gemm(w, &m.u_hat, &m.u_hat.transpose(), 1.0);
    }
    svd_r(&acc, r)
}

/// `svd_r(Σ_j w_j M_j)` over raw noisy projectors `M_j = Ũ_jŨ_jᵀ + Z_j`.
pub fn aggregate_reference(raw: &[DMatrix<f64>], weights: &[f64], r: usize) -> Result<DMatrix<f64>> {
    let (p, cols) = check_bases(raw.iter())?;
    if p != cols {
        return Err(Error::Dimension("raw releases must be square".into()));
    }
    check_rank(p, r)?;
    if weights.len() != raw.len() {
        return Err(Error::Dimension(format!("{} weights for {} releases", weights.len(), raw.len())));
    }
    let mut acc = DMatrix::zeros(p, p);
    for (m, &w) in raw.iter().zip(weights) {
        acc += m * w;
    }
    svd_r(&acc, r)
}

/// `Σ̂ = Σ_j v_j Û Λ̂_j Ûᵀ + σ² I`, with each `Λ̂_j` symmetrised first.
pub fn assemble_covariance(u_hat: &DMatrix<f64>, eig_msgs: &[EigenvalueMessage], v: &[f64], sigma2: f64) -> Result<DMatrix<f64>> {
    let (p, r) = u_hat.shape();
    if eig_msgs.is_empty() {
        return Err(Error::param("eig_msgs", "at least one message"));
    }
    if v.len() != eig_msgs.len() {
        return Err(Error::Dimension(format!("{} weights for {} eigenvalue messages", v.len(), eig_msgs.len())));
    }
    let mut block = DMatrix::zeros(r, r);
    for (m, &w) in eig_msgs.iter().zip(v) {
        if m.lambda_hat.shape() != (r, r) {
            return Err(Error::Dimension(format!(
                "client {} sent a {:?} block, expected {r}x{r}",
                m.client_id,
                m.lambda_hat.shape()
            )));
        }
        let asym = (&m.lambda_hat - m.lambda_hat.transpose()).amax();
        if asym > SYMMETRY_TOL {
            log::warn!("client {}: eigenvalue block asymmetric by {asym:.3e}", m.client_id);
        }
        block += symmetrize(&m.lambda_hat) * w;
    }
    let mut sigma = u_hat * block * u_hat.transpose();
    sigma = symmetrize(&sigma);
    for i in 0..p {
        sigma[(i, i)] += sigma2;
    }
    Ok(sigma)
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to zero.
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(m)?;
    let clipped = eig.values.map(|v| v.max(0.0));
    Ok(symmetrize(&(&eig.vectors * DMatrix::from_diagonal(&clipped) * eig.vectors.transpose())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub model: ModelConstants,
    pub scheme: WeightScheme,
    /// Use the data-independent weights literally proportional to the rate.
    #[serde(default)]
    pub rate_proportional_weights: bool,
    /// Clip negative eigenvalues of the assembled covariance.
    #[serde(default)]
    pub psd_clip: bool,
}

/// Result of the first aggregation round.
#[derive(Debug, Clone)]
pub struct PcaAggregate {
    pub u_hat: DMatrix<f64>,
    /// Client ids in the order the weights refer to.
    pub client_order: Vec<String>,
    pub weights: AggregationWeights,
}

/// Central server.
#[derive(Debug, Clone)]
pub struct Server {
    cfg: ServerConfig,
}

impl Server {
    pub fn new(cfg: ServerConfig) -> Result<Self> {
        check_rank(cfg.model.p, cfg.model.r)?;
        if !(cfg.model.lambda > 0.0 && cfg.model.sigma2 > 0.0) {
            return Err(Error::param("model", "λ and σ² must be positive"));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    /// Weights for the given clients, in the given order.
    pub fn weights(&self, clients: &[ClientParams]) -> Result<AggregationWeights> {
        let mut weights = AggregationWeights::compute(clients, &self.cfg.model, self.cfg.scheme)?;
        if self.cfg.rate_proportional_weights && self.cfg.scheme == WeightScheme::DataIndependent {
            weights.pca_weights_w = pca_weights_rate_proportional(clients, &self.cfg.model)?;
        }
        Ok(weights)
    }

    /// Sorts messages by client id, weighs them and aggregates.
    pub fn aggregate(&self, messages: &[ProjectorMessage]) -> Result<PcaAggregate> {
        let mut sorted: Vec<&ProjectorMessage> = messages.iter().collect();
        sorted.sort_by(|a, b| a.client_id.cmp(&b.client_id));
        if let Some(w) = sorted.windows(2).find(|w| w[0].client_id == w[1].client_id) {
            return Err(Error::Session(format!("duplicate client id `{}`", w[0].client_id)));
        }
        for m in &sorted {
            if m.u_hat.shape() != (self.cfg.model.p, self.cfg.model.r) {
                return Err(Error::Dimension(format!(
                    "client {} sent a {:?} basis, expected {}x{}",
                    m.client_id,
                    m.u_hat.shape(),
                    self.cfg.model.p,
                    self.cfg.model.r
                )));
            }
        }
        let params: Vec<ClientParams> = sorted.iter().map(|m| ClientParams::from(*m)).collect();
        let weights = self.weights(&params)?;
        let owned: Vec<ProjectorMessage> = sorted.iter().map(|m| (*m).clone()).collect();
        let u_hat = aggregate_projectors(&owned, &weights.pca_weights_w)?;
        Ok(PcaAggregate { u_hat, client_order: owned.into_iter().map(|m| m.client_id).collect(), weights })
    }

    /// Assembles `Σ̂` from round-2 messages. Covariance weights are recomputed
    /// over the responding clients, keyed by id.
    pub fn assemble(&self, round1: &PcaAggregate, params: &[(String, ClientParams)], eig_msgs: &[EigenvalueMessage]) -> Result<DMatrix<f64>> {
        let mut sorted: Vec<&EigenvalueMessage> = eig_msgs.iter().collect();
        sorted.sort_by(|a, b| a.client_id.cmp(&b.client_id));
        if let Some(w) = sorted.windows(2).find(|w| w[0].client_id == w[1].client_id) {
            return Err(Error::Session(format!("duplicate client id `{}`", w[0].client_id)));
        }
        let responders = sorted
            .iter()
            .map(|m| {
                params
                    .iter()
                    .find(|(id, _)| *id == m.client_id)
                    .map(|(_, p)| *p)
                    .ok_or_else(|| Error::Session(format!("eigenvalues from unknown client `{}`", m.client_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let v = self.weights(&responders)?.cov_weights_v;
        let owned: Vec<EigenvalueMessage> = sorted.into_iter().cloned().collect();
        let sigma = assemble_covariance(&round1.u_hat, &owned, &v, self.cfg.model.sigma2)?;
        if self.cfg.psd_clip {
            project_psd(&sigma)
        } else {
            Ok(sigma)
        }
    }
}
