//! Local computations of one federated client.
//!
//! Round 1 releases `Û_j = svd_r(Ũ_jŨ_jᵀ + Z_j)` where `Ũ_j` spans the top-r
//! eigenspace of the local sample covariance. Round 2 releases
//! `Λ̂_j = Ûᵀ(Σ̂_j − σ²I)Û + E_j` for the broadcast basis `Û`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dp_mechanism::{calibrate, sample_symmetric_noise, NoiseCalibration, PrivacyBudget};
use crate::error::{Error, Result};
use crate::protocol::{validate_client_id, EigenvalueMessage, ProjectorMessage};
use crate::rates::{psi0_tilde, RateInputs};
use crate::seed::derive_seed;
use crate::spectral::{check_rank, sample_covariance, svd_r, sym_eig};
use crate::spiked_model::Dataset;

/// Eigengap below which the local top-r subspace is reported as degenerate.
const DEGENERATE_GAP: f64 = 1e-10;

const PROJECTOR_NOISE_STREAM: &str = "client.noise.projector";
const EIGENVALUE_NOISE_STREAM: &str = "client.noise.eigenvalues";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub client_id: String,
    pub budget: PrivacyBudget,
    pub rank_r: usize,
    /// Signal strength `λ` used for calibration.
    pub lambda_plugin: f64,
    /// Noise variance `σ²` used for calibration and eigenvalue centring.
    pub sigma2_plugin: f64,
    /// Root of the client's noise streams.
    pub seed: u64,
    /// Attach `Ψ̃₀⁻²` computed from this client's plug-ins to the round-1 release.
    #[serde(default)]
    pub report_weight: bool,
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        validate_client_id(&self.client_id)?;
        self.budget.validate()?;
        if self.rank_r == 0 {
            return Err(Error::param("rank_r", "must be at least 1"));
        }
        if !(self.lambda_plugin > 0.0 && self.sigma2_plugin > 0.0) {
            return Err(Error::param("plug-ins", "λ and σ² must be positive"));
        }
        Ok(())
    }
}

/// A client's data together with the statistics both rounds reuse.
#[derive(Debug, Clone)]
pub struct ClientState {
    cfg: ClientConfig,
    n: usize,
    covariance: DMatrix<f64>,
    local_basis: DMatrix<f64>,
    calibration: NoiseCalibration,
    warnings: Vec<String>,
}

impl ClientState {
    pub fn new(data: &Dataset, cfg: ClientConfig) -> Result<Self> {
        Self::from_covariance(sample_covariance(data), data.len(), cfg)
    }

    /// Builds the state from an already computed sample covariance `Σ̂_j` of `n` observations.
    pub fn from_covariance(covariance: DMatrix<f64>, n: usize, cfg: ClientConfig) -> Result<Self> {
        cfg.validate()?;
        let p = covariance.nrows();
        check_rank(p, cfg.rank_r)?;
        if n < cfg.rank_r {
            return Err(Error::param("n", format!("client `{}` has {n} samples for rank {}", cfg.client_id, cfg.rank_r)));
        }
        let calibration = calibrate(cfg.budget, p, cfg.rank_r, n, cfg.lambda_plugin, cfg.sigma2_plugin)?;
        let eig = sym_eig(&covariance)?;
        let mut warnings = Vec::new();
        let gap = eig.gap(cfg.rank_r);
        if gap < DEGENERATE_GAP {
            log::warn!("client {}: top-{} eigengap {gap:.3e} is degenerate", cfg.client_id, cfg.rank_r);
            warnings.push(format!("degenerate local eigengap {gap:.3e}"));
        }
        let local_basis = eig.leading(cfg.rank_r);
        Ok(Self { cfg, n, covariance, local_basis, calibration, warnings })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Non-private top-r basis `Ũ_j`.
    pub fn local_basis(&self) -> &DMatrix<f64> {
        &self.local_basis
    }

    pub fn calibration(&self) -> NoiseCalibration {
        self.calibration
    }

    /// Rate inputs built from this client's own plug-in constants.
    pub fn rate_inputs(&self) -> RateInputs {
        RateInputs::new(self.n, self.cfg.budget, self.dim(), self.cfg.rank_r, self.cfg.lambda_plugin, self.cfg.sigma2_plugin)
    }

    /// `Ũ_jŨ_jᵀ + Z_j`, the matrix whose top-r eigenspace is released.
    pub fn noisy_projector(&self) -> Result<DMatrix<f64>> {
        let z = sample_symmetric_noise(self.dim(), self.calibration.alpha_sq, derive_seed(self.cfg.seed, PROJECTOR_NOISE_STREAM))?;
        Ok(&self.local_basis * self.local_basis.transpose() + z)
    }

    /// Round-1 release.
    pub fn private_projector(&self) -> Result<ProjectorMessage> {
        let u_hat = svd_r(&self.noisy_projector()?, self.cfg.rank_r)?;
        Ok(ProjectorMessage {
            client_id: self.cfg.client_id.clone(),
            u_hat,
            n: self.n,
            epsilon: self.cfg.budget.epsilon,
            delta: self.cfg.budget.delta,
            warnings: self.warnings.clone(),
            reported_weight: self.cfg.report_weight.then(|| psi0_tilde(&self.rate_inputs()).powi(-2)),
        })
    }

    /// Round-2 release for the broadcast basis `u_global`.
    pub fn private_eigenvalues(&self, u_global: &DMatrix<f64>) -> Result<EigenvalueMessage> {
        let (p, r) = u_global.shape();
        if p != self.dim() || r != self.cfg.rank_r {
            return Err(Error::Dimension(format!(
                "broadcast basis is {p}x{r}, client expects {}x{}",
                self.dim(),
                self.cfg.rank_r
            )));
        }
        let e = sample_symmetric_noise(r, self.calibration.beta_sq, derive_seed(self.cfg.seed, EIGENVALUE_NOISE_STREAM))?;
        let projected = u_global.transpose() * &self.covariance * u_global;
        let mut lambda_hat = projected - DMatrix::identity(r, r) * self.cfg.sigma2_plugin + e;
        lambda_hat = (&lambda_hat + lambda_hat.transpose()) * 0.5;
        Ok(EigenvalueMessage { client_id: self.cfg.client_id.clone(), lambda_hat })
    }
}

/// Round-1 release computed from raw data.
pub fn local_private_projector(data: &Dataset, cfg: &ClientConfig) -> Result<ProjectorMessage> {
    ClientState::new(data, cfg.clone())?.private_projector()
}

/// Round-2 release computed from raw data.
pub fn local_private_eigenvalues(data: &Dataset, u_hat_global: &DMatrix<f64>, cfg: &ClientConfig) -> Result<EigenvalueMessage> {
    ClientState::new(data, cfg.clone())?.private_eigenvalues(u_hat_global)
}
