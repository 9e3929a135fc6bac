//! Messages exchanged during a federated session and their wire encoding.
//!
//! Every message is a UTF-8 JSON object with a `type` tag, a `schema_version`
//! and, for client messages, a `client_id`. Matrices are objects
//! `{"rows": R, "cols": C, "data": [...]}` with row-major entries printed to
//! 17 significant digits, which round-trips IEEE-754 doubles exactly.

mod codec;
pub mod session;
pub mod transport;

use nalgebra::DMatrix;

pub use codec::{decode, encode};
pub use session::{run_federated_session, LocalClient, SessionOptions, SessionOutcome, TranscriptEntry};
pub use transport::{FileTransport, InProcessTransport, TcpTransport, Transport};

use crate::dp_mechanism::PrivacyBudget;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Orthonormality tolerance enforced on every transmitted basis.
pub const ORTHONORMAL_TOL: f64 = 1e-8;
/// Symmetry tolerance enforced on transmitted eigenvalue blocks.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Identifier reserved for the server side of the file transport.
pub const SERVER_ID: &str = "server";

/// Round-1 upload: a client's privatised top-r basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMessage {
    pub client_id: String,
    pub u_hat: DMatrix<f64>,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Non-fatal conditions noticed while computing the release.
    pub warnings: Vec<String>,
    /// Unnormalised aggregation weight computed by the client from its own
    /// plug-in constants.
    pub reported_weight: Option<f64>,
}

impl ProjectorMessage {
    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget { epsilon: self.epsilon, delta: self.delta }
    }
}

/// Round-2 download: the aggregated basis sent to every client.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastMessage {
    pub u_hat_global: DMatrix<f64>,
}

/// Round-2 upload: a client's privatised `r × r` eigenvalue block.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueMessage {
    pub client_id: String,
    pub lambda_hat: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Projector(ProjectorMessage),
    Broadcast(BroadcastMessage),
    Eigenvalue(EigenvalueMessage),
}

impl Message {
    pub fn round(&self) -> u8 {
        match self {
            Message::Projector(_) => 1,
            Message::Broadcast(_) | Message::Eigenvalue(_) => 2,
        }
    }

    pub fn type_tag(&self) -> &'static str {
        match self {
            Message::Projector(_) => "projector",
            Message::Broadcast(_) => "broadcast",
            Message::Eigenvalue(_) => "eigenvalues",
        }
    }

    /// Sender of a client message; the broadcast is attributed to the server.
    pub fn sender(&self) -> &str {
        match self {
            Message::Projector(m) => &m.client_id,
            Message::Eigenvalue(m) => &m.client_id,
            Message::Broadcast(_) => SERVER_ID,
        }
    }

    /// Checks the invariants a receiver relies on.
    pub fn validate(&self) -> Result<()> {
        match self {
            Message::Projector(m) => {
                validate_client_id(&m.client_id)?;
                check_orthonormal("u_hat", &m.u_hat)?;
                if m.n == 0 {
                    return Err(Error::decode("n", "sample size must be positive"));
                }
                PrivacyBudget::new(m.epsilon, m.delta).map_err(|e| Error::decode("epsilon/delta", e.to_string()))?;
                if let Some(w) = m.reported_weight {
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(Error::decode("reported_weight", format!("must be positive and finite, got {w}")));
                    }
                }
            }
            Message::Broadcast(m) => check_orthonormal("u_hat_global", &m.u_hat_global)?,
            Message::Eigenvalue(m) => {
                validate_client_id(&m.client_id)?;
                let l = &m.lambda_hat;
                if !l.is_square() {
                    return Err(Error::decode("lambda_hat", format!("expected square block, got {}x{}", l.nrows(), l.ncols())));
                }
                if l.iter().any(|v| !v.is_finite()) {
                    return Err(Error::decode("lambda_hat", "non-finite entry"));
                }
                let asym = (l - l.transpose()).amax();
                if asym > SYMMETRY_TOL {
                    return Err(Error::decode("lambda_hat", format!("not symmetric (max deviation {asym:.3e})")));
                }
            }
        }
        Ok(())
    }
}

impl From<ProjectorMessage> for Message {
    fn from(m: ProjectorMessage) -> Self {
        Message::Projector(m)
    }
}

impl From<BroadcastMessage> for Message {
    fn from(m: BroadcastMessage) -> Self {
        Message::Broadcast(m)
    }
}

impl From<EigenvalueMessage> for Message {
    fn from(m: EigenvalueMessage) -> Self {
        Message::Eigenvalue(m)
    }
}

/// Client ids become file names in the file transport: ASCII letters, digits,
/// `-`, `_` and `.` only, and never the reserved server id.
pub fn validate_client_id(id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::decode("client_id", "empty"));
    }
    if id == SERVER_ID {
        return Err(Error::decode("client_id", format!("`{SERVER_ID}` is reserved")));
    }
    if !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) || id.starts_with('.') {
        return Err(Error::decode("client_id", format!("`{id}` contains unsupported characters")));
    }
    Ok(())
}

fn check_orthonormal(field: &str, u: &DMatrix<f64>) -> Result<()> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::decode(field, "non-finite entry"));
    }
    if u.ncols() == 0 || u.ncols() > u.nrows() {
        return Err(Error::decode(field, format!("invalid basis shape {}x{}", u.nrows(), u.ncols())));
    }
    let defect = (u.transpose() * u - DMatrix::identity(u.ncols(), u.ncols())).amax();
    if defect > ORTHONORMAL_TOL {
        return Err(Error::decode(field, format!("columns not orthonormal (max deviation {defect:.3e})")));
    }
    Ok(())
}
