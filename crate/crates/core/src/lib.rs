//! Federated, differentially private PCA and covariance estimation under the
//! spiked covariance model.
//!
//! Each client privatises the top-r eigenspace of its sample covariance with
//! a calibrated Gaussian perturbation; the server averages the released
//! projectors with rate-optimal weights, broadcasts the aggregated basis, and
//! assembles a covariance estimate from privatised eigenvalue blocks.

pub mod baselines;
pub mod client;
pub mod dp_mechanism;
pub mod error;
pub mod experiments;
pub mod protocol;
pub mod rates;
pub mod seed;
pub mod server;
pub mod spectral;
pub mod spiked_model;

pub use client::{local_private_eigenvalues, local_private_projector, ClientConfig, ClientState};
pub use dp_mechanism::{calibrate, sample_symmetric_noise, NoiseCalibration, PrivacyBudget};
pub use error::{Error, Result};
pub use protocol::{
    run_federated_session, BroadcastMessage, EigenvalueMessage, LocalClient, Message, ProjectorMessage, SessionOptions,
    SessionOutcome,
};
pub use rates::{cov_bound, pca_bound, psi0_tilde, psi1_tilde, RateInputs};
pub use server::{AggregationWeights, ClientParams, ModelConstants, Server, ServerConfig, WeightScheme};
pub use spectral::{explained_variance, sample_covariance, svd_r, sym_eig, EigenDecomposition};
pub use spiked_model::{covariance_matrix, projection_distance, random_orthonormal, sample, Dataset, SpikedModel};
