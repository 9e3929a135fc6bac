//! Closed-form error rates for local and federated estimators.
//!
//! `psi0_tilde` is the per-client rate for the spectral projector and
//! `psi1_tilde` the per-client rate for the eigenvalues (relative to `λ`).
//! Federated bounds are harmonic means of the per-client squared rates,
//! capped at the trivial error level.

use serde::{Deserialize, Serialize};

use crate::dp_mechanism::PrivacyBudget;
use crate::error::{Error, Result};

/// Universal constant in the admissibility condition `Ψ̃₀ < c₁ √r`.
pub const ADMISSIBILITY_C1: f64 = 0.5;

/// Arguments of the rate functions for one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub p: usize,
    pub r: usize,
    pub lambda: f64,
    pub sigma2: f64,
}

impl RateInputs {
    pub fn new(n: usize, budget: PrivacyBudget, p: usize, r: usize, lambda: f64, sigma2: f64) -> Self {
        Self { n, epsilon: budget.epsilon, delta: budget.delta, p, r, lambda, sigma2 }
    }

    pub fn validate(&self) -> Result<()> {
        PrivacyBudget::new(self.epsilon, self.delta)?;
        if self.n < 1 || self.p < 1 || self.r < 1 {
            return Err(Error::param("rate inputs", "n, p and r must be positive"));
        }
        if !(self.lambda > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::param("rate inputs", "λ and σ² must be positive"));
        }
        Ok(())
    }

    fn snr_factor(&self) -> f64 {
        let q = self.sigma2 / self.lambda;
        q + q.sqrt()
    }

    fn log_delta(&self) -> f64 {
        (2.5 / self.delta).ln()
    }
}

/// `(σ²/λ + sqrt(σ²/λ)) · (sqrt(rp/n) + p·sqrt(r(r + ln n))/(n ε) · sqrt(ln(2.5/δ)))`.
pub fn psi0_tilde(inp: &RateInputs) -> f64 {
    let (n, p, r) = (inp.n as f64, inp.p as f64, inp.r as f64);
    let statistical = (r * p / n).sqrt();
    let privacy = p * (r * (r + n.ln())).sqrt() / (n * inp.epsilon) * inp.log_delta().sqrt();
    inp.snr_factor() * (statistical + privacy)
}

/// `sqrt(r(r + ln n)/n) + sqrt(r (r + ln n)³)/(n ε) · sqrt(ln(2.5/δ))`.
pub fn psi1_tilde(inp: &RateInputs) -> f64 {
    let (n, r) = (inp.n as f64, inp.r as f64);
    let rl = r + n.ln();
    (r * rl / n).sqrt() + (r * rl.powi(3)).sqrt() / (n * inp.epsilon) * inp.log_delta().sqrt()
}

/// Log-free projector rate: `Ψ₀² = (σ⁴/λ² + σ²/λ)(pr/n + p²r²/(n²ε²))`.
pub fn psi0(inp: &RateInputs) -> f64 {
    let (n, p, r) = (inp.n as f64, inp.p as f64, inp.r as f64);
    let q = inp.sigma2 / inp.lambda;
    ((q * q + q) * (p * r / n + (p * r).powi(2) / (n * inp.epsilon).powi(2))).sqrt()
}

/// Log-free eigenvalue rate: `Ψ₁² = r²/n + r⁴/(n²ε²)`.
pub fn psi1(inp: &RateInputs) -> f64 {
    let (n, r) = (inp.n as f64, inp.r as f64);
    (r * r / n + r.powi(4) / (n * inp.epsilon).powi(2)).sqrt()
}

/// Whether `Ψ̃₀ < c₁ √r` with `c₁ = 0.5`.
pub fn is_admissible(inp: &RateInputs) -> bool {
    psi0_tilde(inp) < ADMISSIBILITY_C1 * (inp.r as f64).sqrt()
}

fn harmonic_sum(clients: &[RateInputs], rate: fn(&RateInputs) -> f64) -> Result<f64> {
    if clients.is_empty() {
        return Err(Error::param("clients", "at least one client"));
    }
    for c in clients {
        c.validate()?;
    }
    Ok(clients.iter().map(|c| rate(c).powi(-2)).sum())
}

/// `min(1 / Σ_j Ψ̃₀⁻², 2r)`.
pub fn pca_bound(clients: &[RateInputs]) -> Result<f64> {
    let h = harmonic_sum(clients, psi0_tilde)?;
    Ok((1.0 / h).min(2.0 * clients[0].r as f64))
}

/// `min(λ²/Σ_j Ψ̃₀⁻² + λ²/Σ_j Ψ̃₁⁻², 2rλ²)`.
pub fn cov_bound(clients: &[RateInputs], lambda: f64) -> Result<f64> {
    let h0 = harmonic_sum(clients, psi0_tilde)?;
    let h1 = harmonic_sum(clients, psi1_tilde)?;
    let l2 = lambda * lambda;
    Ok((l2 / h0 + l2 / h1).min(2.0 * clients[0].r as f64 * l2))
}
