//! Federated differentially private Oja iteration, used as a comparison
//! baseline.
//!
//! Each client runs streaming Oja updates
//! `V ← orth(V + η_t (x_t x_tᵀ V + N_t))` over its own observations, with
//! Gaussian noise `N_t` on every update. The server averages the resulting
//! projectors with equal weights and takes the top-r eigenvectors.
//!
//! When no explicit noise level is configured, each observation is clipped to
//! norm `C` and the per-step noise standard deviation is
//! `Δ · sqrt(2 ln(1.25/δ) · T) / ε` with `Δ = 2C²` and `T` the number of
//! updates on the client.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dp_mechanism::PrivacyBudget;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::server::aggregate_projectors;
use crate::spectral::check_rank;
use crate::spiked_model::{random_orthonormal, Dataset};
use crate::protocol::ProjectorMessage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OjaConfig {
    /// Step size numerator: `η_t = step0 / (step_offset + t)^decay`.
    pub step0: f64,
    pub step_offset: f64,
    pub decay: f64,
    pub rank_r: usize,
    /// Passes over each client's data.
    pub passes: usize,
    /// Variance of each entry of `N_t`. `None` derives it from the budget.
    pub noise_per_step: Option<f64>,
    /// Observations are rescaled to at most this norm.
    pub clip_norm: f64,
}

impl OjaConfig {
    /// Step schedule `η_t = 2 / (λ (100 + t))` and clipping norm
    /// `3 sqrt(λ + σ² p)`.
    pub fn for_model(p: usize, r: usize, lambda: f64, sigma2: f64) -> Self {
        Self {
            step0: 2.0 / lambda,
            step_offset: 100.0,
            decay: 1.0,
            rank_r: r,
            passes: 1,
            noise_per_step: None,
            clip_norm: 3.0 * (lambda + sigma2 * p as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(Error::param("step0", "must be positive"));
        }
        if self.step_offset < 0.0 || self.decay < 0.0 {
            return Err(Error::param("step_schedule", "offset and decay must be non-negative"));
        }
        if self.passes == 0 || self.rank_r == 0 {
            return Err(Error::param("oja", "passes and rank must be at least 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::param("clip_norm", "must be positive"));
        }
        if let Some(v) = self.noise_per_step {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param("noise_per_step", "must be a non-negative variance"));
            }
        }
        Ok(())
    }

    fn step(&self, t: usize) -> f64 {
        self.step0 / (self.step_offset + t as f64).powf(self.decay)
    }
}

/// Per-entry standard deviation of the update noise for `total_steps` updates.
pub fn calibrated_step_noise_sd(budget: PrivacyBudget, clip_norm: f64, total_steps: usize) -> f64 {
    let sensitivity = 2.0 * clip_norm * clip_norm;
    sensitivity * (2.0 * (1.25 / budget.delta).ln() * total_steps as f64).sqrt() / budget.epsilon
}

fn orthonormalize(v: DMatrix<f64>) -> DMatrix<f64> {
    if v.ncols() == 1 {
        let norm = v.norm();
        return if norm > 0.0 { v / norm } else { v };
    }
    let qr = v.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..q.ncols() {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Noisy streaming Oja on one client's data.
pub fn dp_oja_local(data: &Dataset, cfg: &OjaConfig, budget: PrivacyBudget, seed: u64) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    budget.validate()?;
    let (p, n) = (data.dim(), data.len());
    let r = cfg.rank_r;
    check_rank(p, r)?;
    let total = n * cfg.passes;
    let variance = match cfg.noise_per_step {
        Some(v) => v,
        None => calibrated_step_noise_sd(budget, cfg.clip_norm, total).powi(2),
    };
    let noise_sd = variance.sqrt();
    let mut rng = rng_from_seed(derive_seed(seed, "oja.noise"));
    let mut v = random_orthonormal(p, r, derive_seed(seed, "oja.init"))?;
    let x_all = data.samples();
    let mut g = DMatrix::zeros(p, r);
    for t in 0..total {
        let x = x_all.column(t % n);
        let norm = x.norm();
        let scale = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
        let proj = (x.transpose() * &v) * (scale * scale);
        g.gemm(1.0, &x, &proj, 0.0);
        if noise_sd > 0.0 {
            for e in g.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *e += noise_sd * z;
            }
        }
        v += &g * cfg.step(t);
        v = orthonormalize(v);
    }
    Ok(v)
}

/// Runs [`dp_oja_local`] on every client and merges the projectors with equal weights.
pub fn fed_dp_oja(datasets: &[Dataset], cfg: &OjaConfig, budgets: &[PrivacyBudget], seed: u64) -> Result<DMatrix<f64>> {
    if datasets.is_empty() || datasets.len() != budgets.len() {
        return Err(Error::Dimension(format!("{} datasets and {} budgets", datasets.len(), budgets.len())));
    }
    let locals = datasets
        .iter()
        .zip(budgets)
        .enumerate()
        .map(|(j, (data, budget))| {
            let u_hat = dp_oja_local(data, cfg, *budget, derive_seed(seed, &format!("oja.client.{j}")))?;
            Ok(ProjectorMessage {
                client_id: format!("oja-{j}"),
                u_hat,
                n: data.len(),
                epsilon: budget.epsilon,
                delta: budget.delta,
                warnings: Vec::new(),
                reported_weight: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let w = vec![1.0 / locals.len() as f64; locals.len()];
    aggregate_projectors(&locals, &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spiked_model::{projection_distance, sample, SpikedModel};

    #[test]
    fn noiseless_oja_converges() {
        let model = SpikedModel::with_random_basis(20, vec![10.0], 1.0, 3).unwrap();
        let data = sample(&model, 100_000, 4).unwrap();
        let mut cfg = OjaConfig::for_model(20, 1, 10.0, 1.0);
        cfg.noise_per_step = Some(0.0);
        let budget = PrivacyBudget::new(1.0, 0.1).unwrap();
        let v = fed_dp_oja(&[data], &cfg, &[budget], 5).unwrap();
        assert!(projection_distance(&v, model.basis()).unwrap() <= 0.1);
        assert!((v.transpose() * &v - DMatrix::identity(1, 1)).amax() < 1e-8);
    }

    #[test]
    fn overwhelming_noise_gives_random_subspace() {
        let model = SpikedModel::with_random_basis(50, vec![10.0], 1.0, 1).unwrap();
        let mut cfg = OjaConfig::for_model(50, 1, 10.0, 1.0);
        cfg.noise_per_step = Some(1e12);
        let budget = PrivacyBudget::new(1.0, 0.1).unwrap();
        let mut dists: Vec<f64> = (0..21)
            .map(|s| {
                let data = sample(&model, 200, 100 + s).unwrap();
                let v = fed_dp_oja(&[data], &cfg, &[budget], s).unwrap();
                projection_distance(&v, model.basis()).unwrap()
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        assert!(dists[10] > 1.2, "median {}", dists[10]);
    }

    #[test]
    fn seeded_and_orthonormal_for_higher_rank() {
        let model = SpikedModel::with_random_basis(12, vec![8.0, 4.0, 2.0], 1.0, 7).unwrap();
        let cfg = OjaConfig::for_model(12, 3, 2.0, 1.0);
        let budget = PrivacyBudget::new(0.5, 0.1).unwrap();
        let data = vec![sample(&model, 300, 1).unwrap(), sample(&model, 200, 2).unwrap()];
        let a = fed_dp_oja(&data, &cfg, &[budget, budget], 9).unwrap();
        assert_eq!(a, fed_dp_oja(&data, &cfg, &[budget, budget], 9).unwrap());
        assert!((a.transpose() * &a - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn calibrated_noise_scale() {
        let budget = PrivacyBudget::new(0.5, 0.1).unwrap();
        let sd = calibrated_step_noise_sd(budget, 2.0, 100);
        let expected = 8.0 * (2.0 * 12.5f64.ln() * 100.0).sqrt() / 0.5;
        assert!((sd - expected).abs() < 1e-9);
    }
}
