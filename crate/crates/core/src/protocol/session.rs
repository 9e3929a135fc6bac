//! Two-round federated session: projectors up, aggregated basis down,
//! eigenvalue blocks up.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use super::{decode, encode, BroadcastMessage, EigenvalueMessage, Message, ProjectorMessage, Transport};
use crate::client::{ClientConfig, ClientState};
use crate::error::{Error, Result};
use crate::server::{AggregationWeights, ClientParams, Server};
use crate::spiked_model::Dataset;

/// A client participating in a session.
#[derive(Debug, Clone)]
pub struct LocalClient {
    state: ClientState,
    silent_from_round: Option<u8>,
}

impl LocalClient {
    pub fn new(data: &Dataset, cfg: ClientConfig) -> Result<Self> {
        Ok(Self::from_state(ClientState::new(data, cfg)?))
    }

    pub fn from_state(state: ClientState) -> Self {
        Self { state, silent_from_round: None }
    }

    /// Simulates a client that stops responding from `round` on.
    pub fn dropping_out_at(mut self, round: u8) -> Self {
        self.silent_from_round = Some(round);
        self
    }

    pub fn id(&self) -> &str {
        &self.state.config().client_id
    }

    pub fn state(&self) -> &ClientState {
        &self.state
    }

    fn responds_in(&self, round: u8) -> bool {
        self.silent_from_round.is_none_or(|r| round < r)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SessionOptions {
    /// Continue with the responding clients instead of failing when some are
    /// missing. Weights are renormalised over the responders.
    pub allow_dropout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub round: u8,
    pub message: Message,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub u_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    /// Every message in the order the receiving side saw it.
    pub transcript: Vec<TranscriptEntry>,
    /// Round-1 weights, ordered as `client_order`.
    pub weights: AggregationWeights,
    pub client_order: Vec<String>,
}

fn check_responders(round: u8, expected: &BTreeSet<&str>, got: &[String], options: &SessionOptions) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in got {
        if !expected.contains(id.as_str()) {
            return Err(Error::Session(format!("round {round}: message from unexpected client `{id}`")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Session(format!("round {round}: duplicate message from `{id}`")));
        }
    }
    let missing: Vec<&str> = expected.iter().filter(|id| !seen.contains(*id)).copied().collect();
    if !missing.is_empty() && !options.allow_dropout {
        return Err(Error::Session(format!("round {round}: no response from {}", missing.join(", "))));
    }
    if seen.is_empty() {
        return Err(Error::Session(format!("round {round}: no client responded")));
    }
    if !missing.is_empty() {
        log::warn!("round {round}: continuing without {}", missing.join(", "));
    }
    Ok(())
}

/// Runs both rounds over `transport` and returns the server's estimates.
pub fn run_federated_session(
    clients: &[LocalClient],
    server: &Server,
    transport: &dyn Transport,
    options: &SessionOptions,
) -> Result<SessionOutcome> {
    if clients.is_empty() {
        return Err(Error::Session("at least one client is required".into()));
    }
    let mut ids = BTreeSet::new();
    for c in clients {
        if !ids.insert(c.id()) {
            return Err(Error::Session(format!("duplicate client id `{}`", c.id())));
        }
        let (p, r) = (c.state().dim(), c.state().config().rank_r);
        let model = server.config().model;
        if (p, r) != (model.p, model.r) {
            return Err(Error::Session(format!(
                "client `{}` works in {p}x{r}, server expects {}x{}",
                c.id(),
                model.p,
                model.r
            )));
        }
    }

    let mut transcript = Vec::with_capacity(2 * clients.len() + 1);

    // Round 1: private projectors.
    for c in clients.iter().filter(|c| c.responds_in(1)) {
        let msg = Message::from(c.state().private_projector()?);
        transport.upload(1, c.id(), &encode(&msg)?)?;
    }
    let mut projectors: Vec<ProjectorMessage> = Vec::new();
    for frame in transport.collect(1, clients.len())? {
        match decode(&frame)? {
            Message::Projector(m) => {
                transcript.push(TranscriptEntry { round: 1, message: Message::Projector(m.clone()) });
                projectors.push(m);
            }
            other => return Err(Error::Session(format!("round 1: unexpected `{}` message", other.type_tag()))),
        }
    }
    let got: Vec<String> = projectors.iter().map(|m| m.client_id.clone()).collect();
    check_responders(1, &ids, &got, options)?;
    let aggregate = server.aggregate(&projectors)?;

    // Broadcast.
    let broadcast = Message::from(BroadcastMessage { u_hat_global: aggregate.u_hat.clone() });
    transport.publish(&encode(&broadcast)?)?;
    transcript.push(TranscriptEntry { round: 2, message: broadcast });

    // Round 2: private eigenvalue blocks from round-1 responders.
    let round1: BTreeSet<&str> = got.iter().map(String::as_str).collect();
    let participants: Vec<&LocalClient> = clients.iter().filter(|c| round1.contains(c.id())).collect();
    for c in participants.iter().filter(|c| c.responds_in(2)) {
        let u_global = match decode(&transport.fetch_broadcast(c.id())?)? {
            Message::Broadcast(b) => b.u_hat_global,
            other => return Err(Error::Session(format!("client `{}` received a `{}` message", c.id(), other.type_tag()))),
        };
        let msg = Message::from(c.state().private_eigenvalues(&u_global)?);
        transport.upload(2, c.id(), &encode(&msg)?)?;
    }
    let mut eigenvalues: Vec<EigenvalueMessage> = Vec::new();
    for frame in transport.collect(2, participants.len())? {
        match decode(&frame)? {
            Message::Eigenvalue(m) => {
                transcript.push(TranscriptEntry { round: 2, message: Message::Eigenvalue(m.clone()) });
                eigenvalues.push(m);
            }
            other => return Err(Error::Session(format!("round 2: unexpected `{}` message", other.type_tag()))),
        }
    }
    let got2: Vec<String> = eigenvalues.iter().map(|m| m.client_id.clone()).collect();
    check_responders(2, &round1, &got2, options)?;

    let params: Vec<(String, ClientParams)> = projectors.iter().map(|m| (m.client_id.clone(), ClientParams::from(m))).collect();
    let sigma_hat = server.assemble(&aggregate, &params, &eigenvalues)?;

    Ok(SessionOutcome {
        u_hat: aggregate.u_hat,
        sigma_hat,
        transcript,
        weights: aggregate.weights,
        client_order: aggregate.client_order,
    })
}
