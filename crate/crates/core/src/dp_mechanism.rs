//! Gaussian mechanism for spectral releases.
//!
//! Noise variances follow the closed forms used by each local client:
//!
//! ```text
//! α² = (8/ε²) ln(2.5/δ) (σ²/λ)(σ²/λ + 1) p (r + ln n) / n²
//! β² = (8/ε²) ln(2.5/δ) (λ² (r + ln n)² + σ⁴ p²) / n²
//! ```
//!
//! `α²` perturbs the local spectral projector and `β²` the local eigenvalue
//! block. Both are added as symmetric Gaussian matrices with doubled variance
//! on the diagonal.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::spectral::{check_rank, sample_covariance, sym_eig};
use crate::spiked_model::{sample, Dataset, SpikedModel};

/// An `(ε, δ)` differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let budget = Self { epsilon, delta };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be positive and finite, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// `ln(2.5/δ)`, the confidence factor shared by every calibration formula.
    pub fn log_factor(&self) -> f64 {
        (2.5 / self.delta).ln()
    }
}

/// Variances of the two Gaussian releases of one client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    /// Off-diagonal variance of the projector noise `Z`.
    pub alpha_sq: f64,
    /// Off-diagonal variance of the eigenvalue noise `E`.
    pub beta_sq: f64,
}

/// Evaluates `α²` and `β²` for one client.
pub fn calibrate(budget: PrivacyBudget, p: usize, r: usize, n: usize, lambda: f64, sigma2: f64) -> Result<NoiseCalibration> {
    budget.validate()?;
    check_rank(p, r)?;
    if n < 2 {
        return Err(Error::param("n", "calibration needs n ≥ 2 so that ln n > 0"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be positive, got {lambda}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::param("sigma2", format!("must be positive, got {sigma2}")));
    }
    let (pf, rf, nf) = (p as f64, r as f64, n as f64);
    let lead = 8.0 / (budget.epsilon * budget.epsilon) * budget.log_factor();
    let snr_inv = sigma2 / lambda;
    let r_log = rf + nf.ln();
    let alpha_sq = lead * snr_inv * (snr_inv + 1.0) * pf * r_log / (nf * nf);
    let beta_sq = lead * (lambda * lambda * r_log * r_log + sigma2 * sigma2 * pf * pf) / (nf * nf);
    let out = NoiseCalibration { alpha_sq, beta_sq };
    if !(alpha_sq.is_finite() && beta_sq.is_finite() && alpha_sq > 0.0 && beta_sq > 0.0) {
        return Err(Error::param("calibration", format!("non-positive or non-finite variance {out:?}")));
    }
    Ok(out)
}

/// Symmetric Gaussian matrix: strictly-lower entries `N(0, variance)`
/// mirrored above the diagonal, diagonal entries `N(0, 2·variance)`.
///
/// Entries are drawn column by column, each column starting with its
/// diagonal entry followed by the entries below it.
pub fn sample_symmetric_noise(p: usize, variance: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param("variance", format!("must be positive and finite, got {variance}")));
    }
    let mut rng = rng_from_seed(seed);
    let sd = variance.sqrt();
    let diag_sd = (2.0 * variance).sqrt();
    let mut z = DMatrix::zeros(p, p);
    for j in 0..p {
        let d: f64 = StandardNormal.sample(&mut rng);
        z[(j, j)] = diag_sd * d;
        for i in (j + 1)..p {
            let g: f64 = StandardNormal.sample(&mut rng);
            z[(i, j)] = sd * g;
            z[(j, i)] = sd * g;
        }
    }
    Ok(z)
}

/// Analytic envelope on the replace-one change of the top-`r` sample projector:
/// `C · (1/n) · sqrt((λ+σ²)/λ · σ²/λ) · sqrt(p (r + ln n))`.
pub fn projector_sensitivity_bound(p: usize, r: usize, n: usize, lambda: f64, sigma2: f64, constant: f64) -> f64 {
    let nf = n as f64;
    constant / nf * ((lambda + sigma2) / lambda * sigma2 / lambda).sqrt() * (p as f64 * (r as f64 + nf.ln())).sqrt()
}

fn top_projector(cov: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let eig = sym_eig(cov)?;
    if eig.gap(r) < 1e-10 {
        return Err(Error::Degenerate(format!("top-{r} eigengap {:.3e} of the sample covariance", eig.gap(r))));
    }
    let u = eig.leading(r);
    Ok(&u * u.transpose())
}

/// Largest Frobenius change of the top-`r` sample projector when observation
/// `i` of `data` is replaced by column `i` of `replacement`, over all `i`.
pub fn leave_one_out_sensitivity(data: &Dataset, r: usize, replacement: &Dataset) -> Result<f64> {
    if replacement.dim() != data.dim() || replacement.len() != data.len() {
        return Err(Error::Dimension("replacement dataset must match the original shape".into()));
    }
    check_rank(data.dim(), r)?;
    let n = data.len() as f64;
    let cov = sample_covariance(data);
    let base = top_projector(&cov, r)?;
    let mut worst = 0.0_f64;
    for (old, new) in data.samples().column_iter().zip(replacement.samples().column_iter()) {
        if old == new {
            continue;
        }
        let neighbour = &cov + (new * new.transpose() - old * old.transpose()) / n;
        let proj = top_projector(&neighbour, r)?;
        worst = worst.max((proj - &base).norm());
    }
    Ok(worst)
}

/// Result of [`empirical_projector_sensitivity`].
#[derive(Debug, Clone)]
pub struct SensitivityEstimate {
    /// Maximum over observations, one entry per trial.
    pub per_trial: Vec<f64>,
}

impl SensitivityEstimate {
    pub fn max(&self) -> f64 {
        self.per_trial.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.per_trial.iter().sum::<f64>() / self.per_trial.len() as f64
    }

    /// Ratio of an analytic bound to the largest observed sensitivity. Values
    /// above one mean the calibrated noise covered every observed neighbour.
    pub fn margin(&self, bound: f64) -> f64 {
        bound / self.max()
    }
}

/// Monte-Carlo estimate of the replace-one sensitivity of the top-`r` sample
/// projector under `model`, using `trials` independent datasets of size `n`.
pub fn empirical_projector_sensitivity(
    model: &SpikedModel,
    n: usize,
    r: usize,
    trials: usize,
    seed: u64,
) -> Result<SensitivityEstimate> {
    if n < r + 2 {
        return Err(Error::param("n", format!("need n ≥ r + 2, got n = {n}, r = {r}")));
    }
    if trials == 0 {
        return Err(Error::param("trials", "at least one trial"));
    }
    let mut per_trial = Vec::with_capacity(trials);
    for t in 0..trials {
        let trial_seed = derive_seed(seed, &format!("sensitivity.trial.{t}"));
        let data = sample(model, n, derive_seed(trial_seed, "data"))?;
        let fresh = sample(model, n, derive_seed(trial_seed, "replacement"))?;
        per_trial.push(leave_one_out_sensitivity(&data, r, &fresh)?);
    }
    Ok(SensitivityEstimate { per_trial })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.1).is_err());
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY, 0.1).is_err());
    }

    #[test]
    fn calibration_reference_value() {
        // 8·ln(25)·0.1·1.1·50·(1 + ln 10⁴)/10⁸, evaluated with mpmath at 50 digits.
        let cal = calibrate(budget(1.0, 0.1), 50, 1, 10_000, 10.0, 1.0).unwrap();
        assert!((cal.alpha_sq - 1.4460959826293168e-5).abs() <= 1e-13 * 1.4460959826293168e-5);
        // 8·ln(25)·(100·(1 + ln 10⁴)² + 2500)/10⁸
        assert!((cal.beta_sq - 3.3283446546450368e-3).abs() <= 1e-13 * 3.3283446546450368e-3);
    }

    #[test]
    fn calibration_scaling() {
        let a = calibrate(budget(0.5, 0.1), 20, 2, 1000, 4.0, 1.0).unwrap();
        let b = calibrate(budget(1.0, 0.1), 20, 2, 1000, 4.0, 1.0).unwrap();
        assert!((a.alpha_sq / b.alpha_sq - 4.0).abs() < 1e-12);
        assert!((a.beta_sq / b.beta_sq - 4.0).abs() < 1e-12);

        let c = calibrate(budget(1.0, 0.05), 20, 2, 1000, 4.0, 1.0).unwrap();
        assert!(c.alpha_sq > b.alpha_sq && c.beta_sq > b.beta_sq);
        let d = calibrate(budget(1.0, 0.1), 20, 2, 2000, 4.0, 1.0).unwrap();
        assert!(d.alpha_sq < b.alpha_sq && d.beta_sq < b.beta_sq);
        // With r + ln n held fixed the n⁻² factor is isolated.
        let ratio = (2000f64 / 1000.0).powi(2) * (2.0 + 1000f64.ln()) / (2.0 + 2000f64.ln());
        assert!((b.alpha_sq / d.alpha_sq - ratio).abs() < 1e-12);
    }

    #[test]
    fn calibration_rejects_bad_inputs() {
        assert!(calibrate(budget(1.0, 0.1), 5, 1, 1, 1.0, 1.0).is_err());
        assert!(calibrate(budget(1.0, 0.1), 5, 1, 10, 0.0, 1.0).is_err());
        assert!(calibrate(budget(1.0, 0.1), 5, 1, 10, 1.0, -1.0).is_err());
        assert!(calibrate(budget(1.0, 0.1), 5, 6, 10, 1.0, 1.0).is_err());
    }

    #[test]
    fn noise_is_symmetric_and_seeded() {
        let z = sample_symmetric_noise(6, 0.3, 4).unwrap();
        assert_eq!(z, z.transpose());
        assert_eq!(z, sample_symmetric_noise(6, 0.3, 4).unwrap());
        assert_ne!(z, sample_symmetric_noise(6, 0.3, 5).unwrap());
        assert!(sample_symmetric_noise(3, 0.0, 1).is_err());
    }

    #[test]
    fn identical_replacement_has_zero_sensitivity() {
        let model = SpikedModel::with_random_basis(8, vec![10.0], 1.0, 2).unwrap();
        let data = sample(&model, 50, 3).unwrap();
        assert_eq!(leave_one_out_sensitivity(&data, 1, &data).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_spectrum_is_flagged() {
        // Isotropic data with two identical coordinates: exact tie at the top.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let data = Dataset::new(x).unwrap();
        let repl = Dataset::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).unwrap();
        assert!(matches!(leave_one_out_sensitivity(&data, 1, &repl), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sensitivity_stays_under_envelope() {
        let model = SpikedModel::with_random_basis(20, vec![10.0], 1.0, 17).unwrap();
        let est = empirical_projector_sensitivity(&model, 500, 1, 5, 99).unwrap();
        let bound = projector_sensitivity_bound(20, 1, 500, 10.0, 1.0, 4.0);
        assert!(est.max() <= bound, "{} > {bound}", est.max());
        assert!(est.margin(bound) >= 1.0);
    }
}
