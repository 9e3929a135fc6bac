//! Spiked covariance model `Σ = U Λ Uᵀ + σ² I`, Gaussian sampling from it,
//! and the projection distance between subspaces.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::spectral::{check_rank, ensure_finite};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Ground-truth parameters of a spiked covariance model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedModel {
    basis: DMatrix<f64>,
    spikes: DVector<f64>,
    noise_var: f64,
}

impl SpikedModel {
    /// Builds a model from an orthonormal `p × r` basis, non-increasing positive
    /// spike eigenvalues and the noise variance `σ²`.
    pub fn new(basis: DMatrix<f64>, spikes: Vec<f64>, noise_var: f64) -> Result<Self> {
        let (p, r) = basis.shape();
        check_rank(p, r)?;
        if spikes.len() != r {
            return Err(Error::Dimension(format!("{} spike eigenvalues for rank {r}", spikes.len())));
        }
        ensure_finite(&basis, "model basis")?;
        if spikes.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::param("spike_eigenvalues", "all spikes must be positive and finite"));
        }
        if spikes.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::param("spike_eigenvalues", "spikes must be non-increasing"));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::param("noise_var_sigma2", "σ² must be positive and finite"));
        }
        let defect = (basis.transpose() * &basis - DMatrix::identity(r, r)).norm();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::param("basis_U", format!("columns not orthonormal (defect {defect:.3e})")));
        }
        Ok(Self { basis, spikes: DVector::from_vec(spikes), noise_var })
    }

    /// Model with a random basis drawn by [`random_orthonormal`].
    pub fn with_random_basis(p: usize, spikes: Vec<f64>, noise_var: f64, seed: u64) -> Result<Self> {
        let basis = random_orthonormal(p, spikes.len(), seed)?;
        Self::new(basis, spikes, noise_var)
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn spikes(&self) -> &DVector<f64> {
        &self.spikes
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Scalar signal strength used in rate formulas and noise calibration: the
    /// smallest spike `λ_r`.
    pub fn signal_strength(&self) -> f64 {
        self.spikes[self.rank() - 1]
    }

    /// The same model expressed in another basis of the same column space, `U Q`.
    pub fn rotated_basis(&self, q: &DMatrix<f64>) -> Result<Self> {
        Self::new(&self.basis * q, self.spikes.iter().copied().collect(), self.noise_var)
    }
}

/// `p × r` matrix with orthonormal columns from the QR factorisation of an
/// i.i.d. Gaussian matrix. Column signs are fixed so that `R` has a positive
/// diagonal.
pub fn random_orthonormal(p: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_rank(p, r)?;
    let mut rng = rng_from_seed(seed);
    let g = DMatrix::from_fn(p, r, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for k in 0..r {
        if rmat[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    Ok(q)
}

/// `Σ = U Λ Uᵀ + σ² I`.
pub fn covariance_matrix(model: &SpikedModel) -> DMatrix<f64> {
    let u = model.basis();
    let scaled = u * DMatrix::from_diagonal(model.spikes());
    let mut sigma = &scaled * u.transpose();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    for i in 0..model.dim() {
        sigma[(i, i)] += model.noise_var();
    }
    sigma
}

/// Draws `n` i.i.d. `N(0, Σ)` observations as `X = U Λ^{1/2} g + σ z`.
///
/// The `r × n` matrix `g` is filled first, then the `p × n` matrix `z`, both
/// column by column from one stream seeded by `seed`.
pub fn sample(model: &SpikedModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::param("n", "sample size must be at least 1"));
    }
    let (p, r) = (model.dim(), model.rank());
    let mut rng = rng_from_seed(seed);
    let mut g = DMatrix::from_fn(r, n, |_, _| StandardNormal.sample(&mut rng));
    for (k, mut row) in g.row_iter_mut().enumerate() {
        row *= model.spikes()[k].sqrt();
    }
    let z: DMatrix<f64> = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let mut x = z * model.noise_var().sqrt();
    x.gemm(1.0, model.basis(), &g, 1.0);
    Dataset::new(x)
}

/// `‖U₁U₁ᵀ − U₂U₂ᵀ‖_F`, evaluated as `sqrt(2r − 2‖U₁ᵀU₂‖_F²)`.
pub fn projection_distance(u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> Result<f64> {
    if u1.shape() != u2.shape() {
        return Err(Error::Dimension(format!(
            "projection_distance of {:?} and {:?} bases",
            u1.shape(),
            u2.shape()
        )));
    }
    let r = u1.ncols() as f64;
    let overlap = (u1.transpose() * u2).norm_squared();
    Ok((2.0 * r - 2.0 * overlap).max(0.0).sqrt())
}

/// Observations held by one party: a `p × n` matrix whose columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    pub client_id: Option<String>,
}

impl Dataset {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() == 0 || samples.nrows() == 0 {
            return Err(Error::param("samples", "dataset needs at least one observation and one coordinate"));
        }
        ensure_finite(&samples, "dataset")?;
        Ok(Self { samples, client_id: None })
    }

    pub fn with_client_id(mut self, id: impl Into<String>) -> Self {
        self.client_id = Some(id.into());
        self
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Dataset made of the given observation indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::param("indices", "empty selection"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Dimension(format!("observation {bad} out of range {}", self.len())));
        }
        Ok(Self { samples: self.samples.select_columns(indices), client_id: self.client_id.clone() })
    }

    /// Copy with observation `i` replaced by `x`.
    pub fn replace_observation(&self, i: usize, x: &DVector<f64>) -> Result<Self> {
        if i >= self.len() || x.len() != self.dim() {
            return Err(Error::Dimension("replacement observation does not fit the dataset".into()));
        }
        let mut samples = self.samples.clone();
        samples.set_column(i, x);
        Ok(Self { samples, client_id: self.client_id.clone() })
    }

    /// SHA-256 over the little-endian bytes of every entry (column-major).
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.dim() as u64).to_le_bytes());
        hasher.update((self.len() as u64).to_le_bytes());
        for v in self.samples.iter() {
            hasher.update(v.to_le_bytes());
        }
        hasher.finalize().into()
    }

    /// Reads one observation per row. When `header` is set the first record is skipped.
    pub fn read_csv<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(header).trim(csv::Trim::All).from_reader(reader);
        let mut values = Vec::new();
        let mut width = None;
        let mut rows = 0;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            match width {
                None => width = Some(record.len()),
                Some(w) if w != record.len() => {
                    return Err(Error::Dimension(format!(
                        "row {} has {} columns, expected {w}",
                        line + 1,
                        record.len()
                    )))
                }
                _ => {}
            }
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::param("csv", format!("row {}: cannot parse `{field}`", line + 1)))?;
                values.push(v);
            }
            rows += 1;
        }
        let p = width.ok_or_else(|| Error::param("csv", "no observations"))?;
        // Row-major n × p buffer is exactly the column-major layout of the p × n matrix.
        Self::new(DMatrix::from_vec(p, rows, values))
    }

    pub fn read_csv_path(path: impl AsRef<Path>, header: bool) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, header)
    }

    /// Writes one observation per row, no header, shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for col in self.samples.column_iter() {
            wtr.write_record(col.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Same observations with rows and columns swapped, for files that store
    /// one observation per column.
    pub fn transposed_source(self) -> Result<Self> {
        Self::new(self.samples.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_model() -> SpikedModel {
        SpikedModel::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), vec![3.0], 1.0).unwrap()
    }

    #[test]
    fn random_orthonormal_properties() {
        let q = random_orthonormal(3, 3, 42).unwrap();
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() <= 1e-10);
        assert_eq!(random_orthonormal(5, 1, 7).unwrap(), random_orthonormal(5, 1, 7).unwrap());
        let u = random_orthonormal(4, 2, 1).unwrap();
        assert!(u.column(0).dot(&u.column(1)).abs() <= 1e-12);
        assert!(random_orthonormal(2, 3, 0).is_err());
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance_matrix(&diag_model()), DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]));
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let model = SpikedModel::new(u, vec![2.0, 1.0], 0.5).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.5, 1.5, 0.5]));
        assert!((covariance_matrix(&model) - expected).amax() < 1e-15);
    }

    #[test]
    fn covariance_spectrum() {
        let model = SpikedModel::with_random_basis(6, vec![5.0, 2.0], 0.7, 3).unwrap();
        let sigma = covariance_matrix(&model);
        assert_eq!(sigma, sigma.transpose());
        let eig = crate::spectral::sym_eig(&sigma).unwrap();
        assert!((eig.values[0] - 5.7).abs() < 1e-9);
        assert!((eig.values[1] - 2.7).abs() < 1e-9);
        assert!((eig.values[5] - 0.7).abs() < 1e-9);
        let shifted = sigma - DMatrix::identity(6, 6) * 0.7;
        let spec = crate::spectral::sym_eig(&shifted).unwrap();
        assert_eq!(spec.values.iter().filter(|v| v.abs() > 1e-9).count(), 2);
    }

    #[test]
    fn model_validation() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(SpikedModel::new(u.clone(), vec![-1.0], 1.0).is_err());
        assert!(SpikedModel::new(u.clone(), vec![1.0], 0.0).is_err());
        assert!(SpikedModel::new(u * 2.0, vec![1.0], 1.0).is_err());
        let u2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(SpikedModel::new(u2, vec![1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let model = diag_model();
        let n = 200_000;
        let data = sample(&model, n, 5).unwrap();
        let cov = crate::spectral::sample_covariance(&data);
        let target = covariance_matrix(&model);
        // Entrywise sd of the second-moment estimator: sqrt((Σ_ii Σ_jj + Σ_ij²)/n).
        for i in 0..2 {
            for j in 0..2 {
                let sd = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov[(i, j)] - target[(i, j)]).abs() <= 3.0 * sd, "entry ({i},{j})");
            }
            let mean = data.samples().row(i).mean();
            assert!(mean.abs() <= 4.0 * (target[(i, i)] / n as f64).sqrt());
        }
        assert_eq!(sample(&model, 10, 9).unwrap(), sample(&model, 10, 9).unwrap());
        assert!(sample(&model, 0, 9).is_err());
    }

    #[test]
    fn projection_distance_examples() {
        let u = random_orthonormal(6, 2, 8).unwrap();
        assert!(projection_distance(&u, &u).unwrap() < 1e-7);
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let e2 = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert!((projection_distance(&e1, &e2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let v = random_orthonormal(6, 2, 9).unwrap();
        let explicit = (&u * u.transpose() - &v * v.transpose()).norm();
        assert!((projection_distance(&u, &v).unwrap() - explicit).abs() < 1e-10);
        assert!(projection_distance(&u, &e1).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let data = sample(&diag_model(), 5, 1).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(&buf[..], false).unwrap(), data);

        let text = "a,b,c\n1,2,3\n4,5,6\n";
        let with_header = Dataset::read_csv(text.as_bytes(), true).unwrap();
        assert_eq!(with_header.dim(), 3);
        assert_eq!(with_header.len(), 2);
        assert_eq!(with_header.samples()[(2, 1)], 6.0);
        assert!(Dataset::read_csv("1,2\n3\n".as_bytes(), false).is_err());
        assert!(Dataset::read_csv("1,x\n".as_bytes(), false).is_err());
    }
}
