//! Dense symmetric eigendecomposition and the spectral utilities built on it.
//!
//! The decomposition itself is delegated to `nalgebra` (Householder
//! tridiagonalisation followed by implicit symmetric QR). This module fixes
//! ordering and sign conventions so that every caller sees a deterministic
//! result.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spiked_model::Dataset;

/// Full eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues, sorted in descending order.
    pub values: DVector<f64>,
    /// Orthogonal matrix whose k-th column is paired with `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// First `r` eigenvectors, i.e. those of the `r` algebraically largest eigenvalues.
    pub fn leading(&self, r: usize) -> DMatrix<f64> {
        self.vectors.columns(0, r).into_owned()
    }

    /// Gap between the `r`-th and `(r+1)`-th eigenvalue, or `+inf` when `r` equals the dimension.
    pub fn gap(&self, r: usize) -> f64 {
        if r == 0 || r >= self.values.len() {
            f64::INFINITY
        } else {
            self.values[r - 1] - self.values[r]
        }
    }
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with descending eigenvalues.
///
/// The input is symmetrised first. Each eigenvector is flipped so that its
/// entry of largest magnitude is positive (ties go to the lowest index).
pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "sym_eig expects a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "sym_eig input")?;
    let p = m.nrows();
    if p == 0 {
        return Ok(EigenDecomposition { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }

    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..p).collect();
    // Stable sort keeps the solver's order for exactly tied eigenvalues.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for i in 1..p {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Orthonormal basis of the top-`r` eigenspace of the symmetrised input.
///
/// Eigenvectors (not singular vectors) of the `r` algebraically largest
/// eigenvalues are returned. For the PSD matrices aggregated on the server
/// the two notions coincide; for a noisy projector `ŨŨᵀ + Z` they differ only
/// if a negative eigenvalue outweighs the signal, which signals a broken
/// noise regime anyway.
pub fn svd_r(m: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    check_rank(m.nrows(), r)?;
    Ok(sym_eig(m)?.leading(r))
}

pub(crate) fn check_rank(p: usize, r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::param("r", "rank must be at least 1"));
    }
    if r > p {
        return Err(Error::Dimension(format!("rank {r} exceeds dimension {p}")));
    }
    Ok(())
}

/// `(1/n) X Xᵀ` for the `p × n` sample matrix.
pub fn sample_covariance(data: &Dataset) -> DMatrix<f64> {
    let x = data.samples();
    let n = x.ncols() as f64;
    let gram = x * x.transpose();
    symmetrize(&gram) / n
}

/// Sample covariance after subtracting the per-coordinate mean.
pub fn centered_covariance(data: &Dataset) -> DMatrix<f64> {
    let x = data.samples();
    let n = x.ncols();
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let gram = &centered * centered.transpose();
    symmetrize(&gram) / n as f64
}

/// Fraction of the (centered) total variance captured by `span(U)`:
/// `tr(Uᵀ Σ̂ U) / tr(Σ̂)`.
pub fn explained_variance(u: &DMatrix<f64>, data: &Dataset) -> Result<f64> {
    if u.nrows() != data.dim() {
        return Err(Error::Dimension(format!(
            "basis has {} rows but data has dimension {}",
            u.nrows(),
            data.dim()
        )));
    }
    let cov = centered_covariance(data);
    explained_variance_of_covariance(u, &cov)
}

pub(crate) fn explained_variance_of_covariance(u: &DMatrix<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let total = cov.trace();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Degenerate("data has zero total variance".into()));
    }
    let captured = (u.transpose() * cov * u).trace();
    Ok((captured / total).clamp(0.0, 1.0))
}
